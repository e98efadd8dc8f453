"""Scalar Gaussian tail functions used by the EP site updates.

``zeta1`` is the inverse Mills ratio phi(x)/Phi(x) and ``zeta2`` its derivative,
``-zeta1(x) * (zeta1(x) + x)``.  Both are evaluated through log-space
differences so that sites with a very negative ``tau`` stay finite.

The underscored variants are numba-compiled and skip input validation; they
are what the EP and sampler kernels call.
"""

from __future__ import annotations

import math

import numba

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
ASYMPTOTIC_CUTOFF = -30.0
_SQRT_HALF = math.sqrt(0.5)


@numba.njit(cache=True)
def _mills_series(x):
    # 1 - 1/x^2 + 3/x^4 - 15/x^6
    u = 1.0 / (x * x)
    return 1.0 - u * (1.0 - 3.0 * u * (1.0 - 5.0 * u))


@numba.njit(cache=True)
def _log_norm_cdf(x):
    if x < ASYMPTOTIC_CUTOFF:
        return -0.5 * x * x - LOG_SQRT_2PI - math.log(-x) + math.log(_mills_series(x))
    if x < 0.0:
        return math.log(0.5 * math.erfc(-x * _SQRT_HALF))
    return math.log1p(-0.5 * math.erfc(x * _SQRT_HALF))


@numba.njit(cache=True)
def _log_zeta1(x):
    if x < ASYMPTOTIC_CUTOFF:
        # log phi - log Phi with the common -x^2/2 term cancelled analytically
        return math.log(-x) - math.log(_mills_series(x))
    return -0.5 * x * x - LOG_SQRT_2PI - _log_norm_cdf(x)


@numba.njit(cache=True)
def _zeta1(x):
    return math.exp(_log_zeta1(x))


@numba.njit(cache=True)
def _zeta2(x):
    z1 = _zeta1(x)
    return -z1 * (z1 + x)


def _checked(x) -> float:
    x = float(x)
    if math.isnan(x):
        raise ValueError("argument is NaN")
    return x


def log_norm_cdf(x: float) -> float:
    """Natural log of the standard normal CDF.

    Uses ``erfc`` on either side of zero (``log1p`` for the upper half) and a
    four-term asymptotic Mills expansion below ``ASYMPTOTIC_CUTOFF``.
    """
    return _log_norm_cdf(_checked(x))


def zeta1(x: float) -> float:
    """phi(x) / Phi(x), computed as ``exp(log phi(x) - log Phi(x))``."""
    return _zeta1(_checked(x))


def zeta2(x: float) -> float:
    """-zeta1(x)**2 - x * zeta1(x); lies in (-1, 0) mathematically."""
    return _zeta2(_checked(x))
