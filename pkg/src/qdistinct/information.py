"""Exact information quantities of an ensemble sent through the n-copy channel.

Everything is computed from the full log-likelihood matrix
``L[j, k] = log P(k | p_j)`` over the complete outcome lattice, so results are
exact up to floating point. Channels whose lattice is too large are refused
rather than approximated.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from qdistinct.geometry import AngleInterval, DiscreteEnsemble
from qdistinct.prob_kernel import as_counts, as_state, binomial_log_rows, multinomial_log_matrix

OUTCOME_GUARD = 10**7
# Largest states x outcomes matrix built in one piece (float64 entries).
MATRIX_GUARD = 4 * 10**7


class OutcomeSpaceError(ValueError):
    """The exact outcome lattice (or states x outcomes matrix) is too large."""


def compositions(n: int, N: int) -> np.ndarray:
    """All nonnegative integer vectors of length N summing to n.

    Rows are ordered lexicographically, so for N = 2 row k is (k, n - k).
    """
    if N == 1:
        return np.array([[n]], dtype=np.int64)
    blocks = []
    for first in range(n + 1):
        rest = compositions(n - first, N - 1)
        blocks.append(np.column_stack([np.full(rest.shape[0], first, dtype=np.int64), rest]))
    return np.vstack(blocks)


@dataclass(frozen=True)
class MeasurementChannel:
    """n independent copies measured in one fixed basis of N outcomes."""

    N: int
    n: int

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("a channel needs N >= 2 outcomes")
        if self.n < 1:
            raise ValueError("n must be a positive integer")

    @property
    def outcome_count(self) -> int:
        return math.comb(self.n + self.N - 1, self.N - 1)

    def check_guard(self, n_states: int = 1) -> None:
        K = self.outcome_count
        if K > OUTCOME_GUARD:
            raise OutcomeSpaceError(f"{K} outcomes exceed the exact-enumeration guard {OUTCOME_GUARD}")
        if K * n_states > MATRIX_GUARD:
            raise OutcomeSpaceError(
                f"{n_states} states x {K} outcomes exceeds the matrix guard {MATRIX_GUARD}")

    def outcomes(self) -> np.ndarray:
        self.check_guard()
        if self.N == 2:
            k = np.arange(self.n + 1, dtype=np.int64)
            return np.column_stack([k, self.n - k])
        return compositions(self.n, self.N)

    def log_likelihood(self, probs, threads: int = 1, outcomes=None) -> np.ndarray:
        """``log P(k | p_j)`` for every state row j and outcome k."""
        probs = np.atleast_2d(np.asarray(probs, dtype=float))
        if probs.shape[1] != self.N:
            raise ValueError(f"states have dimension {probs.shape[1]}, channel has N={self.N}")
        self.check_guard(probs.shape[0])
        if outcomes is None and self.N > 2:
            outcomes = self.outcomes()

        def rows(chunk):
            if self.N == 2 and outcomes is None:
                return binomial_log_rows(self.n, chunk[:, 0])
            return multinomial_log_matrix(outcomes, chunk)

        threads = max(1, int(threads))
        if threads == 1 or probs.shape[0] < 2 * threads:
            return rows(probs)
        # row blocks are independent, so the result does not depend on threads
        chunks = np.array_split(probs, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.vstack(list(pool.map(rows, chunks)))


class OutputDistribution:
    """Marginal distribution P_K over the outcome lattice of a channel."""

    def __init__(self, channel: MeasurementChannel, outcomes: np.ndarray, log_probs: np.ndarray):
        self.channel = channel
        self.outcomes = outcomes
        self.log_probs = log_probs

    @cached_property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    @cached_property
    def _index(self) -> dict:
        return {tuple(row): i for i, row in enumerate(self.outcomes.tolist())}

    def prob(self, counts) -> float:
        counts = as_counts(counts)
        if counts.n != self.channel.n or counts.N != self.channel.N:
            raise ValueError("counts do not belong to this channel")
        if self.channel.N == 2:
            return float(self.probs[counts.counts[0]])
        return float(self.probs[self._index[counts.counts]])

    def __len__(self) -> int:
        return self.log_probs.shape[0]


def _log_marginal(L: np.ndarray, weights: np.ndarray) -> np.ndarray:
    keep = weights > 0
    with np.errstate(divide="ignore"):
        logw = np.log(weights[keep])
    return logsumexp(L[keep] + logw[:, None], axis=0)


def row_informations(L: np.ndarray, log_marginal: np.ndarray) -> np.ndarray:
    """sum_k P(k|p) log(P(k|p) / P_K(k)) for each row of ``L``; +inf on support violations."""
    L = np.atleast_2d(L)
    possible = np.isfinite(L)
    with np.errstate(invalid="ignore"):
        diff = np.where(possible, L - log_marginal, 0.0)
    P = np.exp(np.where(possible, L, -np.inf))
    out = (P * diff).sum(axis=1)
    bad = np.any(possible & ~np.isfinite(log_marginal)[None, :], axis=1)
    out[bad] = np.inf
    return out


def output_marginal(ensemble: DiscreteEnsemble, channel: MeasurementChannel,
                    threads: int = 1) -> OutputDistribution:
    L = channel.log_likelihood(ensemble.probs, threads=threads)
    outcomes = channel.outcomes()
    return OutputDistribution(channel, outcomes, _log_marginal(L, ensemble.weights))


def information_profile(ensemble: DiscreteEnsemble, channel: MeasurementChannel,
                        probes=None, threads: int = 1) -> np.ndarray:
    """Individual information of each ensemble member (or of each probe state)."""
    L = channel.log_likelihood(ensemble.probs, threads=threads)
    logq = _log_marginal(L, ensemble.weights)
    if probes is None:
        return row_informations(L, logq)
    probe_probs = probes.probs if isinstance(probes, DiscreteEnsemble) else np.atleast_2d(probes)
    return row_informations(channel.log_likelihood(probe_probs, threads=threads), logq)


def individual_information(state, ensemble: DiscreteEnsemble, channel: MeasurementChannel) -> float:
    """Information the outcome carries about one particular state.

    Returns ``math.inf`` when the state puts mass on an outcome the ensemble
    marginal never produces.
    """
    state = as_state(state)
    if state.N != channel.N:
        raise ValueError("state dimension does not match the channel")
    return float(information_profile(ensemble, channel, probes=state.as_array())[0])


def mutual_information(ensemble: DiscreteEnsemble, channel: MeasurementChannel,
                       threads: int = 1) -> float:
    """I(K; P) in nats for the ensemble as input distribution."""
    if ensemble.N != channel.N:
        raise ValueError("ensemble dimension does not match the channel")
    D = information_profile(ensemble, channel, threads=threads)
    keep = ensemble.weights > 0
    return max(0.0, float(np.dot(ensemble.weights[keep], D[keep])))


def _band(n: int, interval: AngleInterval) -> tuple[float, float]:
    p_lo, p_hi = interval.p_range
    return n * p_lo, n * p_hi


def asymptotic_marginal(k: int, n: int, interval: AngleInterval) -> float:
    """Large-n marginal of K under the uniform-angle ensemble on ``interval``.

    Returns 0 outside the band n*p_lo <= k <= n*p_hi, and also at k in {0, n}
    where the formula diverges (see :func:`is_endpoint_degenerate`).
    """
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    lo, hi = _band(n, interval)
    if not lo <= k <= hi or k in (0, n):
        return 0.0
    return 1.0 / (2.0 * interval.length * math.sqrt(k * (n - k)))


def is_endpoint_degenerate(k: int, n: int, interval: AngleInterval) -> bool:
    lo, hi = _band(n, interval)
    return k in (0, n) and lo <= k <= hi


def asymptotic_marginal_row(n: int, interval: AngleInterval) -> np.ndarray:
    """:func:`asymptotic_marginal` for every k = 0..n."""
    k = np.arange(n + 1, dtype=float)
    lo, hi = _band(n, interval)
    inside = (k >= lo) & (k <= hi) & (k > 0) & (k < n)
    out = np.zeros(n + 1)
    out[inside] = 1.0 / (2.0 * interval.length * np.sqrt(k[inside] * (n - k[inside])))
    return out


def central_band(n: int, interval: AngleInterval, fraction: float = 0.8) -> np.ndarray:
    """Integer k in the central ``fraction`` of the band [n p_lo, n p_hi], excluding 0 and n."""
    lo, hi = _band(n, interval)
    trim = 0.5 * (1.0 - fraction) * (hi - lo)
    ks = np.arange(math.ceil(lo + trim), math.floor(hi - trim) + 1)
    return ks[(ks > 0) & (ks < n)]
