"""Log-gamma, digamma and trigamma in double precision.

Each function shifts its argument upward with the exact recurrence until it
reaches ``_ASYMPTOTIC_FROM`` and then sums the Stirling / Bernoulli series.
The ``_``-prefixed kernels are jitted, do no argument checking and are meant
for use inside other kernels; the public wrappers validate the domain.
"""

import math

from numba import njit

__all__ = ["log_gamma", "digamma", "trigamma", "log_beta"]

_ASYMPTOTIC_FROM = 15.0
_HALF_LOG_2PI = 0.91893853320467274178

# B_{2k} / (2k (2k - 1)) for k = 1..7
_LGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
)
# B_{2k} / (2k) for k = 1..7
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
# B_{2k} for k = 1..7
_TRIGAMMA_SERIES = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)


@njit(cache=True)
def _log_gamma(x):
    if x == 1.0 or x == 2.0:
        return 0.0
    shift = 0.0
    if x < _ASYMPTOTIC_FROM:
        prod = 1.0
        while x < _ASYMPTOTIC_FROM:
            prod *= x
            x += 1.0
        shift = math.log(prod)
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    power = inv
    for coef in _LGAMMA_SERIES:
        series += coef * power
        power *= inv2
    return (x - 0.5) * math.log(x) - x + _HALF_LOG_2PI + series - shift


@njit(cache=True)
def _digamma(x):
    acc = 0.0
    while x < _ASYMPTOTIC_FROM:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    power = inv2
    for coef in _DIGAMMA_SERIES:
        series += coef * power
        power *= inv2
    return acc + math.log(x) - 0.5 / x - series


@njit(cache=True)
def _trigamma(x):
    acc = 0.0
    while x < _ASYMPTOTIC_FROM:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    power = inv2 * inv
    for coef in _TRIGAMMA_SERIES:
        series += coef * power
        power *= inv2
    return acc + inv + 0.5 * inv2 + series


@njit(cache=True)
def _log_beta(a, b):
    return _log_gamma(a) + _log_gamma(b) - _log_gamma(a + b)


def _check_domain(name, x):
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"{name} is defined here for x > 0 only, got {x!r}")
    if math.isinf(x):
        raise ValueError(f"{name} needs a finite argument")
    return x


def log_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0."""
    return _log_gamma(_check_domain("log_gamma", x))


def digamma(x: float) -> float:
    """psi(x) = d/dx ln Gamma(x) for x > 0."""
    return _digamma(_check_domain("digamma", x))


def trigamma(x: float) -> float:
    """psi'(x) for x > 0."""
    return _trigamma(_check_domain("trigamma", x))


def log_beta(a: float, b: float) -> float:
    return _log_beta(_check_domain("log_beta", a), _check_domain("log_beta", b))
