"""Summary statistics of bivariate data on the unit square and the L1 distance.

The 5-vector is (mean log z1, mean log z2, mean log(1-z1), mean log(1-z2),
Pearson r).  The 8-vector appends Spearman's rho, Kendall's tau and the mean
of sqrt(z1*z2).  Kernels return NaN for degenerate data so that simulation
loops can reject instead of raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DegenerateDataError, DimensionError
from .model import BivariateDataset

__all__ = [
    "SummaryVector",
    "summaries5",
    "summaries8",
    "legacy_moment_stat",
    "l1_distance",
]


@dataclass(frozen=True)
class SummaryVector:
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size not in (5, 8):
            raise DimensionError(f"summary vectors have 5 or 8 components, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise DegenerateDataError(f"summary vector has non-finite entries: {values}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def k(self) -> int:
        return self.values.size

    def __getitem__(self, i):
        return self.values[i]

    def __len__(self):
        return self.k

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@njit(cache=True)
def _pearson(x, y):
    n = x.shape[0]
    mx = 0.0
    my = 0.0
    x_varies = False
    y_varies = False
    for i in range(n):
        mx += x[i]
        my += y[i]
        x_varies = x_varies or x[i] != x[0]
        y_varies = y_varies or y[i] != y[0]
    if not (x_varies and y_varies):
        return np.nan
    mx /= n
    my /= n
    sxy = 0.0
    sxx = 0.0
    syy = 0.0
    for i in range(n):
        dx = x[i] - mx
        dy = y[i] - my
        sxy += dx * dy
        sxx += dx * dx
        syy += dy * dy
    r = sxy / math.sqrt(sxx * syy)
    # rounding can push |r| a hair past 1
    return min(1.0, max(-1.0, r))


@njit(cache=True)
def _average_ranks(x):
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[order[j + 1]] == x[order[i]]:
            j += 1
        avg = 0.5 * (i + j) + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    return ranks


@njit(cache=True)
def _spearman(x, y, raw_differences):
    n = x.shape[0]
    total = 0.0
    if raw_differences:
        for i in range(n):
            d = x[i] - y[i]
            total += d * d
    else:
        rx = _average_ranks(x)
        ry = _average_ranks(y)
        for i in range(n):
            d = rx[i] - ry[i]
            total += d * d
    return 1.0 - 6.0 * total / (n * (n * n - 1.0))


@njit(cache=True)
def _kendall(x, y):
    n = x.shape[0]
    score = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            s = (x[i] - x[j]) * (y[i] - y[j])
            if s > 0.0:
                score += 1
            elif s < 0.0:
                score -= 1
    return score / (0.5 * n * (n - 1.0))


@njit(cache=True)
def summaries_into(z, out, raw_spearman=False):
    """Fill ``out`` (length 5 or 8) with the statistics of the ``(n, 2)`` array ``z``."""
    n = z.shape[0]
    s1 = 0.0
    s2 = 0.0
    s3 = 0.0
    s4 = 0.0
    s8 = 0.0
    for i in range(n):
        a = z[i, 0]
        b = z[i, 1]
        s1 += math.log(a)
        s2 += math.log(b)
        s3 += math.log1p(-a)
        s4 += math.log1p(-b)
        s8 += math.sqrt(a * b)
    out[0] = s1 / n
    out[1] = s2 / n
    out[2] = s3 / n
    out[3] = s4 / n
    out[4] = _pearson(z[:, 0], z[:, 1]) if n >= 2 else np.nan
    if out.shape[0] == 8:
        x = np.ascontiguousarray(z[:, 0])
        y = np.ascontiguousarray(z[:, 1])
        out[5] = _spearman(x, y, raw_spearman) if n >= 2 else np.nan
        out[6] = _kendall(x, y) if n >= 2 else np.nan
        out[7] = s8 / n


@njit(cache=True, inline="always")
def l1(a, b):
    total = 0.0
    for i in range(a.shape[0]):
        total += abs(a[i] - b[i])
    # non-finite summaries never count as close
    if not total < np.inf:
        return np.inf
    return total


def _as_array(data):
    if isinstance(data, BivariateDataset):
        return data.z
    return BivariateDataset(np.asarray(data)).z


def _summaries(data, k, raw_spearman=False):
    z = _as_array(data)
    if z.shape[0] < 2:
        raise DegenerateDataError("summary statistics need at least two observations")
    if np.ptp(z[:, 0]) == 0.0 or np.ptp(z[:, 1]) == 0.0:
        raise DegenerateDataError("a coordinate is constant; the correlation is undefined")
    out = np.empty(k)
    summaries_into(z, out, raw_spearman)
    return SummaryVector(out)


def summaries5(data: BivariateDataset) -> SummaryVector:
    """Marginal log-moments and Pearson correlation."""
    return _summaries(data, 5)


def summaries8(data: BivariateDataset, raw_spearman: bool = False) -> SummaryVector:
    """The five statistics of :func:`summaries5` plus Spearman, Kendall and mean sqrt(z1*z2).

    Spearman's rho uses differences of within-column (average) ranks.  With
    ``raw_spearman=True`` the differences are taken between the raw
    coordinates z1 - z2 instead, which is not a correlation in general and is
    kept only for comparison runs.
    """
    return _summaries(data, 8, raw_spearman)


def legacy_moment_stat(data: BivariateDataset) -> float:
    """Sample mean of (1 - z1)(1 - z2) / (z1 z2).

    Unbounded as a coordinate approaches 0, which makes it a poor ABC summary.
    """
    z = _as_array(data)
    ratio = (1.0 - z[:, 0]) * (1.0 - z[:, 1]) / (z[:, 0] * z[:, 1])
    return float(ratio.mean())


def l1_distance(a, b) -> float:
    """Unweighted sum of absolute componentwise differences."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise DimensionError(f"cannot compare summaries of length {a.size} and {b.size}")
    # same summation order as the simulation kernels
    return float(l1(a, b))
