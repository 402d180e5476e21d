"""Monte Carlo identification experiments with maximum-likelihood decoding.

Each trial draws a codeword uniformly, measures n copies of it, and decodes
the outcome counts by maximum likelihood. Trial ``t`` of a run with seed ``s``
uses its own counter-based stream ``(s, t)``, so a report is bit-identical for
any number of worker threads.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import interp1d
from scipy.integrate import cumulative_trapezoid
from scipy.special import xlogy
from statsmodels.stats.proportion import proportion_confint

from qdistinct._streams import derive_seed, stream_factory
from qdistinct.asymptotics import w_ndim, w_qubit
from qdistinct.geometry import (AngleInterval, SphericalDomain, has_duplicate_states, angles_to_probs,
                                area_exponents, domain_area)
from qdistinct.prob_kernel import as_counts, draw_counts

log = logging.getLogger(__name__)

_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class Codebook:
    """Equally spaced states; ``coords`` holds their hyperspherical angles."""

    probs: np.ndarray
    coords: np.ndarray
    geometry: AngleInterval | SphericalDomain

    def __len__(self) -> int:
        return self.probs.shape[0]

    @property
    def N(self) -> int:
        return self.probs.shape[1]


def _axis_quantiles(lo: float, hi: float, power: int, fractions: np.ndarray) -> np.ndarray:
    """Points splitting the measure sin(t)^power dt on [lo, hi] at the given fractions."""
    if power == 0:
        return lo + fractions * (hi - lo)
    t = np.linspace(lo, hi, 20001)
    cdf = cumulative_trapezoid(np.sin(t) ** power, t, initial=0.0)
    return interp1d(cdf / cdf[-1], t)(fractions)


def _split_counts(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def _equal_area_points(box, expo, M: int) -> np.ndarray:
    """M points of equal surface measure in an angular box, by recursive zoning.

    The first axis is cut into bands whose measure is proportional to the
    number of points they receive; each band is filled recursively along the
    remaining axes. Every point sits at the measure-median of its cell.
    """
    (lo, hi), rest = box[0], box[1:]
    if not rest:
        frac = (np.arange(M) + 0.5) / M
        return _axis_quantiles(lo, hi, expo[0], frac)[:, None]
    bands = max(1, int(round(M ** (1.0 / len(box)))))
    counts = _split_counts(M, bands)
    edges = np.concatenate([[0], np.cumsum(counts)]) / M
    mids = _axis_quantiles(lo, hi, expo[0], 0.5 * (edges[:-1] + edges[1:]))
    out = []
    for c, t1 in zip(counts, mids):
        inner = _equal_area_points(rest, expo[1:], c)
        out.append(np.column_stack([np.full(c, t1), inner]))
    return np.vstack(out)


def build_codebook(geometry, M: int) -> Codebook:
    """M states at equal angular spacing (N = 2) or equal surface measure (N > 2)."""
    if M < 1:
        raise ValueError("codebook size must be at least 1")
    if isinstance(geometry, AngleInterval):
        coords = (geometry.lo + (np.arange(M) + 0.5) * geometry.length / M)[:, None]
    elif isinstance(geometry, SphericalDomain):
        areas = np.array([domain_area(SphericalDomain(geometry.N, (b,))) for b in geometry.boxes])
        # largest-remainder split of M across boxes, by area
        share = M * areas / areas.sum()
        alloc = np.floor(share).astype(int)
        alloc[np.argsort(-(share - alloc), kind="stable")[: M - alloc.sum()]] += 1
        expo = area_exponents(geometry.N)
        parts = [_equal_area_points(b, expo, int(c)) for b, c in zip(geometry.boxes, alloc) if c > 0]
        coords = np.vstack(parts)
    else:
        raise TypeError(f"unsupported geometry {geometry!r}")
    probs = angles_to_probs(coords)
    if has_duplicate_states(probs):
        raise ValueError(f"M={M} exceeds the number of distinct representable states")
    return Codebook(probs, coords, geometry)


def _log_likelihoods(counts: np.ndarray, probs: np.ndarray) -> np.ndarray:
    # counts (T, N), probs (M, N) -> (T, M), without the multinomial coefficient;
    # 0 * log 0 counts as 0
    return xlogy(counts[:, None, :], probs[None, :, :]).sum(axis=2)


def ml_decode_batch(counts: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Most likely codeword index for each row of counts; ties go to the lowest index."""
    counts = np.atleast_2d(counts)
    if counts.shape[1] != codebook.N:
        raise ValueError("counts and codebook differ in dimension")
    out = np.empty(counts.shape[0], dtype=np.int64)
    for start in range(0, counts.shape[0], _CHUNK):
        out[start:start + _CHUNK] = np.argmax(_log_likelihoods(counts[start:start + _CHUNK], codebook.probs), axis=1)
    return out


def ml_decode(counts, codebook: Codebook) -> int:
    counts = as_counts(counts)
    return int(ml_decode_batch(counts.as_array()[None, :], codebook)[0])


@dataclass(frozen=True)
class SimulationConfig:
    codebook: Codebook
    n: int
    trials: int
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


def wilson_interval(errors: int, trials: int, alpha: float = 0.05) -> tuple[float, float]:
    lo, hi = proportion_confint(errors, trials, alpha=alpha, method="wilson")
    return float(lo), float(hi)


def predicted_states(geometry, n: int) -> float:
    if isinstance(geometry, AngleInterval):
        return w_qubit(n, geometry)
    return w_ndim(geometry.N, n, domain_area(geometry))


@dataclass
class SimulationReport:
    n: int
    M: int
    trials: int
    seed: int
    errors: int
    error_rate: float
    wilson_ci_95: tuple[float, float]
    draws: np.ndarray
    codeword_errors: np.ndarray
    confusion: np.ndarray
    w_predicted: float

    @property
    def load_factor(self) -> float:
        return self.M / self.w_predicted

    @property
    def per_codeword_error(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.draws > 0, self.codeword_errors / np.maximum(self.draws, 1), np.nan)

    def most_common_confusions(self) -> list[int | None]:
        """For each true codeword, the wrong decode seen most often (None if never wrong)."""
        off = self.confusion.copy()
        np.fill_diagonal(off, 0)
        return [int(np.argmax(row)) if row.any() else None for row in off]

    def summary(self) -> dict:
        lo, hi = self.wilson_ci_95
        return {
            "n": self.n, "M": self.M, "trials": self.trials, "seed": self.seed,
            "errors": self.errors, "error_rate": self.error_rate, "ci_lo": lo, "ci_hi": hi,
            "w_predicted": self.w_predicted, "load_factor": self.load_factor,
        }

    def to_dict(self) -> dict:
        out = self.summary()
        out["per_codeword_error"] = [None if math.isnan(x) else float(x) for x in self.per_codeword_error]
        out["draws"] = self.draws.tolist()
        out["most_common_confusion"] = self.most_common_confusions()
        return out


def _run_trials(stream, codebook: Codebook, n: int, start: int, stop: int):
    size = len(codebook)
    truth = np.empty(stop - start, dtype=np.int64)
    counts = np.empty((stop - start, codebook.N), dtype=np.int64)
    for i, t in enumerate(range(start, stop)):
        rng = stream(t)
        j = int(rng.integers(size))
        truth[i] = j
        counts[i] = draw_counts(codebook.probs[j], n, rng)[0]
    return truth, ml_decode_batch(counts, codebook)


def run_experiment(config: SimulationConfig, threads: int = 1) -> SimulationReport:
    codebook, n = config.codebook, config.n
    M = len(codebook)
    stream = stream_factory(config.seed)
    bounds = [(s, min(s + _CHUNK, config.trials)) for s in range(0, config.trials, _CHUNK)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _run_trials(stream, codebook, n, *b), bounds))
    else:
        parts = [_run_trials(stream, codebook, n, *b) for b in bounds]
    truth = np.concatenate([p[0] for p in parts])
    decoded = np.concatenate([p[1] for p in parts])
    confusion = np.zeros((M, M), dtype=np.int64)
    np.add.at(confusion, (truth, decoded), 1)
    draws = confusion.sum(axis=1)
    codeword_errors = draws - np.diag(confusion)
    errors = int(codeword_errors.sum())
    return SimulationReport(
        n=n, M=M, trials=config.trials, seed=config.seed, errors=errors,
        error_rate=errors / config.trials,
        wilson_ci_95=wilson_interval(errors, config.trials),
        draws=draws, codeword_errors=codeword_errors, confusion=confusion,
        w_predicted=predicted_states(codebook.geometry, n),
    )


def error_vs_load_sweep(geometry, n_values, load_factors, trials: int, seed: int,
                        threads: int = 1) -> list[dict]:
    """Error rate on codebooks of size floor(load * W(n)), one row per (n, load).

    Row ``i`` (counting skipped rows) runs under the seed derived from
    ``(seed, i)``. Rows whose codebook would be empty are skipped.
    """
    if not n_values or not load_factors:
        raise ValueError("n_values and load_factors must be nonempty")
    rows = []
    index = 0
    for n in n_values:
        w = predicted_states(geometry, int(n))
        for load in load_factors:
            row_seed = derive_seed(seed, index)
            index += 1
            M = math.floor(load * w)
            if M < 1:
                log.info("skipping n=%s load=%s: codebook size floors to %d", n, load, M)
                continue
            report = run_experiment(
                SimulationConfig(build_codebook(geometry, M), int(n), trials, row_seed), threads=threads)
            row = report.summary()
            row["load"] = float(load)
            rows.append(row)
    return rows
