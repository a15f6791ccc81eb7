"""The 5- and 8-parameter bivariate beta laws built from ratios of gamma sums.

With independent ``U_i ~ Gamma(delta_i, 1)``::

    Z1 = (U1 + U5 + U7) / (U1 + U5 + U7 + U3 + U6 + U8)
    Z2 = (U2 + U5 + U8) / (U2 + U5 + U8 + U4 + U6 + U7)

The 5-parameter law is the special case
``delta = (a1, a2, 0, 0, 0, a5, a3, a4)``; setting ``a3 = a4 = 0`` as well
gives the 3-parameter law, which only allows positive correlation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DegenerateDataError, ParameterError, PoleError
from .numerics.rng import RngStream, log_standard_gamma, open_unit, standard_gamma

__all__ = [
    "BB5Params",
    "BB8Params",
    "BivariateDataset",
    "embed_bb5",
    "marginal_params",
    "sample_bb5",
    "sample_bb8",
    "theoretical_cross_moment",
    "mc_correlation",
]


def _as_shape_vector(values, size, name):
    arr = tuple(float(v) for v in values)
    if len(arr) != size:
        raise ParameterError(f"{name} needs {size} components, got {len(arr)}")
    for v in arr:
        if not (v >= 0.0 and math.isfinite(v)):
            raise ParameterError(f"{name} components must be finite and >= 0, got {arr}")
    return arr


@dataclass(frozen=True)
class BB8Params:
    """Shapes (delta_1, ..., delta_8) of the 8-parameter law.

    Zeros are accepted only as the reduction boundary produced by
    :func:`embed_bb5`; each marginal must still have positive shapes.
    """

    delta: tuple[float, ...]

    def __post_init__(self):
        delta = _as_shape_vector(self.delta, 8, "delta")
        object.__setattr__(self, "delta", delta)
        (a, b), (c, d) = _marginals8(delta)
        if min(a, b, c, d) <= 0.0:
            raise ParameterError(f"delta {delta} leaves a marginal beta shape at zero")

    @property
    def is_boundary(self) -> bool:
        return any(v == 0.0 for v in self.delta)

    def as_array(self) -> np.ndarray:
        return np.array(self.delta, dtype=np.float64)


@dataclass(frozen=True)
class BB5Params:
    """Shapes (alpha_1, ..., alpha_5) of the 5-parameter law.

    ``alpha_3 = alpha_4 = 0`` is the 3-parameter boundary and is allowed;
    :attr:`is_boundary` flags any zero component.
    """

    alpha: tuple[float, ...]

    def __post_init__(self):
        alpha = _as_shape_vector(self.alpha, 5, "alpha")
        object.__setattr__(self, "alpha", alpha)
        (a, b), (c, d) = _marginals5(alpha)
        if min(a, b, c, d) <= 0.0:
            raise ParameterError(f"alpha {alpha} leaves a marginal beta shape at zero")

    @property
    def is_boundary(self) -> bool:
        return any(v == 0.0 for v in self.alpha)

    def as_array(self) -> np.ndarray:
        return np.array(self.alpha, dtype=np.float64)


@dataclass(frozen=True)
class BivariateDataset:
    """``n`` paired observations, stored as an ``(n, 2)`` float array."""

    z: np.ndarray = field(repr=False)

    def __post_init__(self):
        z = np.ascontiguousarray(self.z, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != 2 or z.shape[0] < 1:
            raise ParameterError(f"expected an (n, 2) array with n >= 1, got shape {z.shape}")
        if not np.all((z > 0.0) & (z < 1.0)):
            raise ParameterError("all coordinates must lie strictly inside (0, 1)")
        z.flags.writeable = False
        object.__setattr__(self, "z", z)

    @classmethod
    def from_pairs(cls, pairs) -> BivariateDataset:
        return cls(np.asarray(pairs, dtype=np.float64).reshape(-1, 2))

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def z1(self) -> np.ndarray:
        return self.z[:, 0]

    @property
    def z2(self) -> np.ndarray:
        return self.z[:, 1]

    def __len__(self):
        return self.n


def _marginals8(d):
    return (
        (d[0] + d[4] + d[6], d[2] + d[5] + d[7]),
        (d[1] + d[4] + d[7], d[3] + d[5] + d[6]),
    )


def _marginals5(a):
    return (a[0] + a[2], a[3] + a[4]), (a[1] + a[3], a[2] + a[4])


def embed_bb5(params: BB5Params) -> BB8Params:
    """The 8-parameter vector (a1, a2, 0, 0, 0, a5, a3, a4) equal in law to ``params``."""
    a1, a2, a3, a4, a5 = params.alpha
    return BB8Params((a1, a2, 0.0, 0.0, 0.0, a5, a3, a4))


def marginal_params(params: BB5Params | BB8Params):
    """Beta shapes ``((a, b), (c, d))`` of Z1 and Z2."""
    if isinstance(params, BB5Params):
        return _marginals5(params.alpha)
    if isinstance(params, BB8Params):
        return _marginals8(params.delta)
    raise TypeError(f"expected BB5Params or BB8Params, got {type(params).__name__}")


# below this shape U**(1/a) underflows often enough that gamma sums can be 0/0
_LOG_SPACE_BELOW = 0.1


@njit(cache=True, inline="always")
def _gamma_or_zero(state, shape):
    # zero shapes contribute an exact 0 and consume no stream state
    if shape > 0.0:
        return standard_gamma(state, shape)
    return 0.0


@njit(cache=True, inline="always")
def _log_gamma_or_neg_inf(state, shape):
    if shape > 0.0:
        return log_standard_gamma(state, shape)
    return -np.inf


@njit(cache=True, inline="always")
def _log_sum3(a, b, c):
    m = max(a, max(b, c))
    if m == -np.inf:
        return m
    return m + math.log(math.exp(a - m) + math.exp(b - m) + math.exp(c - m))


@njit(cache=True, inline="always")
def _share(log_num, log_rest):
    # num / (num + rest) from logs, as a logistic of the log ratio
    return 1.0 / (1.0 + math.exp(log_rest - log_num))


@njit(cache=True)
def _draw_bb8_pair_log(state, delta):
    l1 = _log_gamma_or_neg_inf(state, delta[0])
    l2 = _log_gamma_or_neg_inf(state, delta[1])
    l3 = _log_gamma_or_neg_inf(state, delta[2])
    l4 = _log_gamma_or_neg_inf(state, delta[3])
    l5 = _log_gamma_or_neg_inf(state, delta[4])
    l6 = _log_gamma_or_neg_inf(state, delta[5])
    l7 = _log_gamma_or_neg_inf(state, delta[6])
    l8 = _log_gamma_or_neg_inf(state, delta[7])
    z1 = _share(_log_sum3(l1, l5, l7), _log_sum3(l3, l6, l8))
    z2 = _share(_log_sum3(l2, l5, l8), _log_sum3(l4, l6, l7))
    return open_unit(z1), open_unit(z2)


@njit(cache=True, inline="always")
def draw_bb8_pair(state, delta):
    """One (Z1, Z2) draw; U1..U8 are drawn in index order.

    With any shape below ``_LOG_SPACE_BELOW`` the gamma variates are carried
    as logarithms, which uses the stream identically.
    """
    for i in range(8):
        if 0.0 < delta[i] < _LOG_SPACE_BELOW:
            return _draw_bb8_pair_log(state, delta)
    u1 = _gamma_or_zero(state, delta[0])
    u2 = _gamma_or_zero(state, delta[1])
    u3 = _gamma_or_zero(state, delta[2])
    u4 = _gamma_or_zero(state, delta[3])
    u5 = _gamma_or_zero(state, delta[4])
    u6 = _gamma_or_zero(state, delta[5])
    u7 = _gamma_or_zero(state, delta[6])
    u8 = _gamma_or_zero(state, delta[7])
    num1 = u1 + u5 + u7
    num2 = u2 + u5 + u8
    z1 = open_unit(num1 / (num1 + u3 + u6 + u8))
    z2 = open_unit(num2 / (num2 + u4 + u6 + u7))
    return z1, z2


@njit(cache=True)
def embed5_array(alpha):
    delta = np.zeros(8)
    delta[0] = alpha[0]
    delta[1] = alpha[1]
    delta[5] = alpha[4]
    delta[6] = alpha[2]
    delta[7] = alpha[3]
    return delta


@njit(cache=True)
def fill_bb8(state, delta, out):
    for i in range(out.shape[0]):
        z1, z2 = draw_bb8_pair(state, delta)
        out[i, 0] = z1
        out[i, 1] = z2


def _check_n(n):
    if int(n) != n or n < 1:
        raise ParameterError(f"n must be a positive integer, got {n!r}")
    return int(n)


def sample_bb8(stream: RngStream, params: BB8Params, n: int) -> BivariateDataset:
    """``n`` independent draws from BB(delta_1, ..., delta_8)."""
    if not isinstance(params, BB8Params):
        raise ParameterError("sample_bb8 needs BB8Params")
    out = np.empty((_check_n(n), 2))
    fill_bb8(stream.state, params.as_array(), out)
    return BivariateDataset(out)


def sample_bb5(stream: RngStream, params: BB5Params, n: int) -> BivariateDataset:
    """``n`` draws from BB(alpha_1, ..., alpha_5), via the 8-parameter embedding.

    Uses the stream exactly like ``sample_bb8(stream, embed_bb5(params), n)``.
    """
    if not isinstance(params, BB5Params):
        raise ParameterError("sample_bb5 needs BB5Params")
    return sample_bb8(stream, embed_bb5(params), n)


def theoretical_cross_moment(params: BB5Params) -> float:
    """E[(1 - Z1)(1 - Z2) / (Z1 Z2)] under the 5-parameter law.

    Finite only when alpha_1 + alpha_3 > 1 and alpha_2 + alpha_4 > 1.
    """
    a1, a2, a3, a4, a5 = params.alpha
    a = a1 + a3
    c = a2 + a4
    if a <= 1.0 or c <= 1.0:
        raise PoleError(
            f"cross moment diverges unless a1 + a3 > 1 and a2 + a4 > 1 (got {a}, {c})"
        )
    return (
        (a4 / c) * (a3 / a)
        + (a3 / a) * (a5 / (c - 1.0))
        + (a4 / c) * (a5 / (a - 1.0))
        + (a5 / (a - 1.0)) * ((a5 + 1.0) / (c - 1.0))
    )


def mc_correlation(stream: RngStream, params: BB5Params | BB8Params, draws: int) -> float:
    """Pearson correlation of ``draws`` fresh (Z1, Z2) pairs."""
    if draws < 2:
        raise ParameterError("need at least two draws for a correlation")
    if isinstance(params, BB5Params):
        data = sample_bb5(stream, params, draws)
    else:
        data = sample_bb8(stream, params, draws)
    z1, z2 = data.z1, data.z2
    if z1.std() == 0.0 or z2.std() == 0.0:
        raise DegenerateDataError("sample has a constant coordinate")
    return float(np.corrcoef(z1, z2)[0, 1])
