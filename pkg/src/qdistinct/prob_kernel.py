"""Probability kernels of the n-copy measurement channel.

Exact binomial and multinomial pmfs are evaluated in the log domain, with
``0 * log 0 == 0`` and ``p ** 0 == 1`` at the simplex boundary. The Gaussian
approximations return density values; they are only normalized on the integer
lattice when compared against an exact pmf (see :func:`normalized_gaussian_binomial`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, xlogy

from qdistinct._streams import make_stream

# Sum-to-one tolerance for probability vectors.
STATE_TOL = 1e-12


@dataclass(frozen=True)
class OutcomeCounts:
    """How many of the ``n`` measurements landed on each basis outcome."""

    counts: tuple[int, ...]
    n: int

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) < 2:
            raise ValueError("need at least two outcomes")
        if any(c < 0 for c in counts):
            raise ValueError(f"counts must be nonnegative, got {counts}")
        if self.n < 1 or sum(counts) != self.n:
            raise ValueError(f"counts {counts} do not sum to n={self.n}")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def of(cls, counts: Sequence[int]) -> "OutcomeCounts":
        counts = tuple(int(c) for c in counts)
        return cls(counts, sum(counts))

    @property
    def N(self) -> int:
        return len(self.counts)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)


@dataclass(frozen=True)
class StatePoint:
    """A pure state reduced to its outcome probabilities for the fixed basis."""

    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if len(probs) < 2:
            raise ValueError("a state needs at least two outcome probabilities")
        if any(not (0.0 <= p <= 1.0) for p in probs):
            raise ValueError(f"probabilities must lie in [0, 1], got {probs}")
        if abs(math.fsum(probs) - 1.0) > STATE_TOL:
            raise ValueError(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        object.__setattr__(self, "probs", probs)

    @property
    def N(self) -> int:
        return len(self.probs)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)


def as_state(state) -> StatePoint:
    if isinstance(state, StatePoint):
        return state
    return StatePoint(tuple(np.asarray(state, dtype=float).ravel()))


def as_counts(counts) -> OutcomeCounts:
    if isinstance(counts, OutcomeCounts):
        return counts
    return OutcomeCounts.of(counts)


def log_gamma(x):
    """ln Gamma(x) for x > 0. Accepts scalars or arrays."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("log_gamma is only defined here for x > 0")
    out = gammaln(arr)
    return float(out) if out.ndim == 0 else out


def _log_multinomial(n, counts: np.ndarray, probs: np.ndarray):
    # counts, probs broadcast against each other along the last axis
    coef = gammaln(n + 1.0) - gammaln(counts + 1.0).sum(axis=-1)
    return coef + xlogy(counts, probs).sum(axis=-1)


def log_binomial_pmf(n: int, k: int, p: float) -> float:
    if n < 1:
        raise ValueError("n must be a positive integer")
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")
    counts = np.array([k, n - k], dtype=float)
    probs = np.array([p, 1.0 - p])
    return float(_log_multinomial(n, counts, probs))


def binomial_pmf(n: int, k: int, p: float) -> float:
    """P(K = k) for K ~ Binomial(n, p)."""
    return math.exp(log_binomial_pmf(n, k, p))


def log_multinomial_pmf(counts, state) -> float:
    counts, state = as_counts(counts), as_state(state)
    if counts.N != state.N:
        raise ValueError(f"dimension mismatch: {counts.N} counts vs {state.N} probabilities")
    return float(_log_multinomial(counts.n, counts.as_array().astype(float), state.as_array()))


def multinomial_pmf(counts, state) -> float:
    return math.exp(log_multinomial_pmf(counts, state))


def binomial_log_rows(n: int, p) -> np.ndarray:
    """Log pmf over k = 0..n for each success probability in ``p``.

    Returns shape ``(len(p), n + 1)`` (or ``(n + 1,)`` for scalar ``p``).
    """
    p = np.asarray(p, dtype=float)
    k = np.arange(n + 1, dtype=float)
    coef = gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
    pc = p[..., None]
    return coef + xlogy(k, pc) + xlogy(n - k, 1.0 - pc)


def multinomial_log_matrix(outcomes: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Log pmf of every outcome row (K, N) under every state row (M, N) -> (M, K)."""
    outcomes = np.asarray(outcomes, dtype=float)
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    n = outcomes[0].sum()
    coef = gammaln(n + 1.0) - gammaln(outcomes + 1.0).sum(axis=1)
    out = np.empty((probs.shape[0], outcomes.shape[0]))
    for j in range(probs.shape[0]):
        out[j] = coef + xlogy(outcomes, probs[j]).sum(axis=1)
    return out


def gaussian_binomial_approx(n: int, k, p: float):
    """Normal density with the binomial's mean and variance, evaluated at ``k``."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"Gaussian approximation needs 0 < p < 1, got p={p}")
    var = p * (1.0 - p) * n
    k = np.asarray(k, dtype=float)
    out = np.exp(-((k - p * n) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
    return float(out) if out.ndim == 0 else out


def gaussian_multinomial_approx(counts, state) -> float:
    """Reduced (N-1)-dimensional Gaussian density of the first N-1 counts.

    The last count is eliminated through sum(k) = n; the quadratic form is
    sum_i (k_i - p_i n)^2 / (p_i n) over all N components.
    """
    counts, state = as_counts(counts), as_state(state)
    if counts.N != state.N:
        raise ValueError("dimension mismatch between counts and state")
    p = state.as_array()
    if np.any(p <= 0):
        raise ValueError("Gaussian approximation is degenerate when some p_i = 0")
    n = counts.n
    k = counts.as_array().astype(float)
    quad = np.sum((k - p * n) ** 2 / (p * n))
    log_norm = 0.5 * (counts.N - 1) * math.log(2.0 * math.pi * n) + 0.5 * np.log(p).sum()
    return math.exp(-0.5 * quad - log_norm)


def normalized_gaussian_binomial(n: int, p: float) -> np.ndarray:
    """Gaussian density on k = 0..n, rescaled to a pmf over that lattice."""
    dens = gaussian_binomial_approx(n, np.arange(n + 1), p)
    return dens / dens.sum()


def sample_counts(state, n: int, seed, size: int | None = None):
    """Draw multinomial outcome counts by sequential conditional binomials.

    ``seed`` is a nonnegative integer (mapped to a counter-based stream) or an
    existing ``numpy.random.Generator``. With ``size`` given, returns an int
    array of shape ``(size, N)``; otherwise a single :class:`OutcomeCounts`.
    """
    state = as_state(state)
    if n < 1:
        raise ValueError("n must be a positive integer")
    rng = seed if isinstance(seed, np.random.Generator) else make_stream(seed, 0)
    draws = draw_counts(state.as_array(), n, rng, size=1 if size is None else size)
    if size is None:
        return OutcomeCounts(tuple(int(c) for c in draws[0]), n)
    return draws


def draw_counts(probs: np.ndarray, n: int, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    N = probs.shape[0]
    out = np.zeros((size, N), dtype=np.int64)
    remaining = np.full(size, n, dtype=np.int64)
    mass_left = 1.0
    for i in range(N - 1):
        if mass_left <= 0.0:
            break
        frac = min(1.0, max(0.0, probs[i] / mass_left))
        out[:, i] = rng.binomial(remaining, frac)
        remaining -= out[:, i]
        mass_left -= probs[i]
    out[:, N - 1] = remaining
    return out


def total_variation(pmf_a, pmf_b) -> float:
    """Half the L1 distance between two pmfs on the same finite outcome set."""
    a = np.asarray(pmf_a, dtype=float)
    b = np.asarray(pmf_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"outcome sets differ: shapes {a.shape} and {b.shape}")
    return float(0.5 * np.abs(a - b).sum())
