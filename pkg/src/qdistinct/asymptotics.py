"""Leading-order large-n formulas for information and distinguishable-state counts.

All informations are in nats. State counts are real numbers; flooring to an
integer codebook size is left to the caller.
"""

from __future__ import annotations

import math
import warnings

from qdistinct.prob_kernel import log_gamma

# Repo convention for "n much larger than N"; below it the formulas still
# evaluate but a warning is raised.
VALIDITY_FACTOR = 50


class AsymptoticValidityWarning(UserWarning):
    """n is too small relative to N for the Gaussian regime to be trusted."""


def is_valid_regime(N: int, n: int) -> bool:
    return n >= VALIDITY_FACTOR * N


def _warn_if_invalid(N: int, n: int) -> None:
    if not is_valid_regime(N, n):
        warnings.warn(
            f"n={n} < {VALIDITY_FACTOR}*N={VALIDITY_FACTOR * N}: asymptotic formula outside its regime",
            AsymptoticValidityWarning,
            stacklevel=3,
        )


def _length(interval) -> float:
    # accepts an AngleInterval or a plain length in radians
    length = float(getattr(interval, "length", interval))
    if length <= 0:
        raise ValueError("interval length must be positive")
    return length


def _check_n(n) -> None:
    if n < 1:
        raise ValueError("n must be a positive integer")


def _log_ratio(n) -> float:
    return math.log(2.0 * n / (math.pi * math.e))


def i_sup_qubit(n: int, interval) -> float:
    _check_n(n)
    return 0.5 * _log_ratio(n) + math.log(_length(interval))


def w_qubit(n: int, interval) -> float:
    _check_n(n)
    return _length(interval) * math.sqrt(2.0 * n / (math.pi * math.e))


def w_max_qubit(n: int) -> float:
    _check_n(n)
    return math.sqrt(math.pi * n / (2.0 * math.e))


def i_sup_ndim(N: int, n: int, omega: float) -> float:
    _check_n(n)
    if N < 2:
        raise ValueError("N must be at least 2")
    if omega <= 0:
        raise ValueError("omega must be positive")
    return math.log(omega) + 0.5 * (N - 1) * _log_ratio(n)


def w_ndim(N: int, n: int, omega: float) -> float:
    _check_n(n)
    if N < 2:
        raise ValueError("N must be at least 2")
    if omega <= 0:
        raise ValueError("omega must be positive")
    _warn_if_invalid(N, n)
    return omega * (2.0 * n / (math.pi * math.e)) ** (0.5 * (N - 1))


def omega_max(N: int) -> float:
    """Area of the non-negative orthant of the unit sphere in R^N."""
    if N < 2:
        raise ValueError("N must be at least 2")
    return math.exp(0.5 * N * math.log(math.pi) - (N - 1) * math.log(2.0) - log_gamma(0.5 * N))


def w_max_ndim(N: int, n: int) -> float:
    _check_n(n)
    if N < 2:
        raise ValueError("N must be at least 2")
    _warn_if_invalid(N, n)
    log_w = 0.5 * math.log(math.pi) - log_gamma(0.5 * N) + 0.5 * (N - 1) * math.log(n / (2.0 * math.e))
    return math.exp(log_w)
