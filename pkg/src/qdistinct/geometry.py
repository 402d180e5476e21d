"""State-space geometry for a fixed projective measurement.

Phases are invisible to the measurement, so a state is a point on the
non-negative orthant of the real unit sphere S^{N-1}, and its outcome
probabilities are the squared Cartesian coordinates. Domains on that orthant
are described in hyperspherical angles theta_1..theta_{N-1}, each in [0, pi/2]:

    x_1 = cos t1,  x_2 = sin t1 cos t2,  ...,  x_N = sin t1 ... sin t_{N-1}

with surface element prod_i sin(t_i)^(N-1-i) dt_i. For N = 2 this is the
single angle alpha with p = (cos^2 alpha, sin^2 alpha).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import integrate

from qdistinct.asymptotics import omega_max
from qdistinct.prob_kernel import STATE_TOL, StatePoint

HALF_PI = 0.5 * math.pi
# Inputs like "1.5707963268" overshoot pi/2 by a few 1e-12; snap them back.
_ANGLE_SLACK = 1e-9
DUPLICATE_TOL = 1e-12
_PAIRWISE_LIMIT = 4096


def _snap_angle(a: float) -> float:
    if HALF_PI < a <= HALF_PI + _ANGLE_SLACK:
        return HALF_PI
    if -_ANGLE_SLACK <= a < 0.0:
        return 0.0
    return float(a)


@dataclass(frozen=True)
class AngleInterval:
    """Qubit states with angle in [lo, hi] from the first basis vector."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = _snap_angle(self.lo), _snap_angle(self.hi)
        if not (0.0 <= lo < hi <= HALF_PI):
            raise ValueError(f"need 0 <= lo < hi <= pi/2, got [{self.lo}, {self.hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def full(cls) -> "AngleInterval":
        return cls(0.0, HALF_PI)

    @classmethod
    def from_p_range(cls, p_lo: float, p_hi: float) -> "AngleInterval":
        """Interval whose first-outcome probability spans [p_lo, p_hi]."""
        if not 0.0 <= p_lo < p_hi <= 1.0:
            raise ValueError("need 0 <= p_lo < p_hi <= 1")
        return cls(math.acos(math.sqrt(p_hi)), math.acos(math.sqrt(p_lo)))

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def p_range(self) -> tuple[float, float]:
        """(p_lo, p_hi) for the first outcome; cos^2 is decreasing on [0, pi/2]."""
        p_lo = 0.0 if self.hi == HALF_PI else math.cos(self.hi) ** 2
        return p_lo, math.cos(self.lo) ** 2

    def as_domain(self) -> "SphericalDomain":
        return SphericalDomain(2, (((self.lo, self.hi),),))

    def describe(self) -> str:
        return f"interval[{self.lo:.10g},{self.hi:.10g}]"


def _boxes_overlap(a, b) -> bool:
    return all(min(ah, bh) - max(al, bl) > 0 for (al, ah), (bl, bh) in zip(a, b))


@dataclass(frozen=True)
class SphericalDomain:
    """A union of disjoint axis-aligned boxes in hyperspherical angles."""

    N: int
    boxes: tuple[tuple[tuple[float, float], ...], ...]
    _is_orthant: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("dimension must be at least 2")
        if not self.boxes:
            raise ValueError("domain needs at least one box")
        boxes = []
        for box in self.boxes:
            if len(box) != self.N - 1:
                raise ValueError(f"each box needs {self.N - 1} angle ranges")
            clean = []
            for lo, hi in box:
                lo, hi = _snap_angle(lo), _snap_angle(hi)
                if not 0.0 <= lo < hi <= HALF_PI:
                    raise ValueError(f"angle range [{lo}, {hi}] outside [0, pi/2] or empty")
                clean.append((lo, hi))
            boxes.append(tuple(clean))
        for a, b in combinations(boxes, 2):
            if _boxes_overlap(a, b):
                raise ValueError("boxes overlap; domains must be unions of disjoint boxes")
        object.__setattr__(self, "boxes", tuple(boxes))
        full = ((0.0, HALF_PI),) * (self.N - 1)
        object.__setattr__(self, "_is_orthant", len(boxes) == 1 and boxes[0] == full)

    @classmethod
    def orthant(cls, N: int) -> "SphericalDomain":
        return cls(N, (((0.0, HALF_PI),) * (N - 1),))

    @classmethod
    def box(cls, bounds) -> "SphericalDomain":
        bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
        return cls(len(bounds) + 1, (bounds,))

    def union(self, other: "SphericalDomain") -> "SphericalDomain":
        if other.N != self.N:
            raise ValueError("cannot join domains of different dimension")
        return SphericalDomain(self.N, self.boxes + other.boxes)

    @property
    def is_orthant(self) -> bool:
        return self._is_orthant

    @property
    def area(self) -> float:
        return domain_area(self)

    def describe(self) -> str:
        if self.is_orthant:
            return f"orthant[N={self.N}]"
        return f"domain[N={self.N},boxes={len(self.boxes)}]"


class DiscreteEnsemble:
    """Finite weighted set of states standing in for an input distribution.

    ``probs`` has one state per row; ``coords`` optionally carries the
    hyperspherical angles each state was generated from.
    """

    def __init__(self, probs, weights, coords=None):
        probs = np.atleast_2d(np.asarray(probs, dtype=float))
        weights = np.asarray(weights, dtype=float).ravel()
        if probs.shape[0] != weights.shape[0]:
            raise ValueError("states and weights differ in length")
        if probs.shape[0] == 0:
            raise ValueError("ensemble is empty")
        if probs.shape[1] < 2:
            raise ValueError("states need at least two outcome probabilities")
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValueError("state probabilities must lie in [0, 1]")
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > STATE_TOL):
            raise ValueError("every state must sum to 1")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be a probability vector (sum={weights.sum()!r})")
        if has_duplicate_states(probs):
            raise ValueError("ensemble contains duplicate states")
        self.probs = probs
        self.weights = weights
        self.coords = None if coords is None else np.asarray(coords, dtype=float)

    @classmethod
    def from_states(cls, states, weights=None) -> "DiscreteEnsemble":
        rows = [s.as_array() if isinstance(s, StatePoint) else np.asarray(s, float) for s in states]
        if weights is None:
            weights = np.full(len(rows), 1.0 / len(rows))
        return cls(np.vstack(rows), weights)

    def __len__(self) -> int:
        return self.probs.shape[0]

    @property
    def N(self) -> int:
        return self.probs.shape[1]

    @property
    def states(self) -> list[StatePoint]:
        return [StatePoint(tuple(row)) for row in self.probs]

    def reweighted(self, weights) -> "DiscreteEnsemble":
        ens = object.__new__(DiscreteEnsemble)
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.shape != self.weights.shape or abs(weights.sum() - 1.0) > 1e-10:
            raise ValueError("replacement weights must match and sum to 1")
        ens.probs, ens.weights, ens.coords = self.probs, weights, self.coords
        return ens

    def subset(self, index) -> "DiscreteEnsemble":
        index = np.asarray(index)
        w = self.weights[index]
        coords = None if self.coords is None else self.coords[index]
        return DiscreteEnsemble(self.probs[index], w / w.sum(), coords)


def has_duplicate_states(probs: np.ndarray) -> bool:
    M = probs.shape[0]
    if M < 2:
        return False
    if M <= _PAIRWISE_LIMIT:
        for start in range(0, M, 512):
            block = probs[start:start + 512]
            close = np.all(np.abs(block[:, None, :] - probs[None, :, :]) <= DUPLICATE_TOL, axis=2)
            rows = np.arange(start, start + block.shape[0])
            close[rows - start, rows] = False
            if close.any():
                return True
        return False
    order = np.lexsort(probs.T[::-1])
    srt = probs[order]
    return bool(np.any(np.all(np.abs(np.diff(srt, axis=0)) <= DUPLICATE_TOL, axis=1)))


def angle_to_state(alpha: float) -> StatePoint:
    """(cos^2 alpha, sin^2 alpha) for alpha in [0, pi/2]."""
    a = _snap_angle(alpha)
    if not 0.0 <= a <= HALF_PI:
        raise ValueError(f"angle {alpha} outside [0, pi/2]")
    return StatePoint(tuple(angles_to_probs([a])))


def cartesian_to_state(x) -> StatePoint:
    x = np.asarray(x, dtype=float).ravel()
    if np.any(x < 0):
        raise ValueError("coordinates must be nonnegative")
    sq = x * x
    total = sq.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"not a unit vector (|x|^2 = {total})")
    return StatePoint(tuple(sq / total))


def angles_to_cartesian(theta) -> np.ndarray:
    """Hyperspherical angles (..., N-1) to unit vectors (..., N)."""
    theta = np.asarray(theta, dtype=float)
    lead = theta.shape[:-1]
    d = theta.shape[-1]
    x = np.empty(lead + (d + 1,))
    sin_prod = np.ones(lead)
    for i in range(d):
        x[..., i] = sin_prod * np.cos(theta[..., i])
        sin_prod = sin_prod * np.sin(theta[..., i])
    x[..., d] = sin_prod
    return x


def angles_to_probs(theta) -> np.ndarray:
    x = angles_to_cartesian(theta)
    p = x * x
    return p / p.sum(axis=-1, keepdims=True)


def area_exponents(N: int) -> np.ndarray:
    """Power of sin(theta_i) in the surface element, for i = 1..N-1."""
    return np.arange(N - 2, -1, -1)


def uniform_angle_grid(interval: AngleInterval, m: int) -> DiscreteEnsemble:
    """Midpoint discretization of the uniform density on an angle interval."""
    if m < 1:
        raise ValueError("grid size must be at least 1")
    step = interval.length / m
    angles = interval.lo + (np.arange(m) + 0.5) * step
    return DiscreteEnsemble(angles_to_probs(angles[:, None]), np.full(m, 1.0 / m), coords=angles[:, None])


def domain_cells(domain: SphericalDomain, m_per_axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint cells of every box: (angles (P, N-1), cell areas (P,)).

    Each box is split into ``m_per_axis`` equal angular steps along every
    axis; a cell's area is the surface element at its midpoint times its
    angular volume, so the areas sum to a quadrature estimate of the domain area.
    """
    if m_per_axis < 1:
        raise ValueError("m_per_axis must be at least 1")
    expo = area_exponents(domain.N)
    coords, areas = [], []
    for box in domain.boxes:
        axes, dens = [], []
        vol = 1.0
        for (lo, hi), e in zip(box, expo):
            step = (hi - lo) / m_per_axis
            mid = lo + (np.arange(m_per_axis) + 0.5) * step
            axes.append(mid)
            dens.append(np.sin(mid) ** e)
            vol *= step
        mesh = np.meshgrid(*axes, indexing="ij")
        dmesh = np.meshgrid(*dens, indexing="ij")
        coords.append(np.stack([g.ravel() for g in mesh], axis=1))
        areas.append(np.prod(np.stack([g.ravel() for g in dmesh], axis=1), axis=1) * vol)
    return np.vstack(coords), np.concatenate(areas)


def uniform_domain_grid(domain: SphericalDomain, m_per_axis: int) -> DiscreteEnsemble:
    """Grid over the domain weighted by the uniform surface measure."""
    coords, areas = domain_cells(domain, m_per_axis)
    weights = areas / areas.sum()
    if np.all(areas == areas[0]):
        weights = np.full(areas.shape, 1.0 / areas.size)
    return DiscreteEnsemble(angles_to_probs(coords), weights, coords=coords)


def domain_area(domain: SphericalDomain) -> float:
    """Surface area of the domain on the unit sphere (steradians for N = 3)."""
    if domain.is_orthant:
        return omega_max(domain.N)
    expo = area_exponents(domain.N)
    total = 0.0
    for box in domain.boxes:
        vol = 1.0
        for (lo, hi), e in zip(box, expo):
            if e == 0:
                vol *= hi - lo
            else:
                val, _ = integrate.quad(lambda t, e=e: math.sin(t) ** e, lo, hi,
                                        epsabs=0.0, epsrel=1e-12)
                vol *= val
        total += vol
    return total
