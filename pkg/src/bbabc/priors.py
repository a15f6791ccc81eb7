"""Independent priors on positive parameter vectors.

Two families are supported, the shape-scale gamma and the "modified uniform"
``U_p(0, mu)``: flat with mass ``p`` on ``(0, mu)`` and an exponential tail
beyond ``mu`` whose rate keeps the density continuous at ``mu``.

The named priors G1/U1 share mean 1.3 and variance 0.676; G2/U2 share mean
2.6 and variance 2.704.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit

from .errors import ConfigError, DimensionError, ParameterError
from .numerics.rng import RngStream, standard_gamma, uniform
from .numerics.special import _log_gamma

__all__ = [
    "ModifiedUniform",
    "GammaPrior",
    "PriorProduct",
    "NAMED_PRIORS",
    "modified_uniform_pdf",
    "modified_uniform_sample",
    "product_sample",
    "product_log_pdf",
    "parse_prior",
]

_KIND_GAMMA = 0
_KIND_MODUNIF = 1


@dataclass(frozen=True)
class ModifiedUniform:
    mu: float
    p: float

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ParameterError(f"mu must be positive, got {self.mu!r}")
        if not 0.0 < self.p < 1.0:
            raise ParameterError(f"p must lie in (0, 1), got {self.p!r}")

    @property
    def tail_rate(self) -> float:
        return self.p / (self.mu * (1.0 - self.p))

    @property
    def mean(self) -> float:
        return self.p * self.mu / 2.0 + (1.0 - self.p) * (self.mu + 1.0 / self.tail_rate)

    @property
    def variance(self) -> float:
        mu, p, rate = self.mu, self.p, self.tail_rate
        second = p * mu**2 / 3.0 + (1.0 - p) * ((mu + 1.0 / rate) ** 2 + 1.0 / rate**2)
        return second - self.mean**2

    def pdf(self, x: float) -> float:
        return modified_uniform_pdf(self, x)

    def log_pdf(self, x: float) -> float:
        return float(_component_log_pdf(_KIND_MODUNIF, self.mu, self.p, float(x)))

    def _encode(self):
        return _KIND_MODUNIF, self.mu, self.p


@dataclass(frozen=True)
class GammaPrior:
    """Gamma with shape ``shape`` and *scale* ``scale`` (mean shape*scale)."""

    shape: float
    scale: float

    def __post_init__(self):
        for name in ("shape", "scale"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ParameterError(f"{name} must be positive, got {value!r}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def variance(self) -> float:
        return self.shape * self.scale**2

    def pdf(self, x: float) -> float:
        return math.exp(self.log_pdf(x))

    def log_pdf(self, x: float) -> float:
        return float(_component_log_pdf(_KIND_GAMMA, self.shape, self.scale, float(x)))

    def _encode(self):
        return _KIND_GAMMA, self.shape, self.scale


Prior = Union[ModifiedUniform, GammaPrior]


@dataclass(frozen=True)
class PriorProduct:
    """Independent priors, one per parameter, in parameter order."""

    components: tuple[Prior, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ParameterError("a prior product needs at least one component")
        for c in comps:
            if not isinstance(c, (ModifiedUniform, GammaPrior)):
                raise ParameterError(f"unsupported prior component {c!r}")
        object.__setattr__(self, "components", comps)

    @classmethod
    def iid(cls, component: Prior, k: int) -> PriorProduct:
        return cls((component,) * k)

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.components])

    @property
    def variances(self) -> np.ndarray:
        return np.array([c.variance for c in self.components])

    def encoded(self):
        """(kinds, first, second) arrays consumed by the jitted kernels."""
        kinds = np.empty(self.dim, dtype=np.int64)
        first = np.empty(self.dim)
        second = np.empty(self.dim)
        for i, c in enumerate(self.components):
            kinds[i], first[i], second[i] = c._encode()
        return kinds, first, second


NAMED_PRIORS: dict[str, Prior] = {
    "G1": GammaPrior(2.5, 0.52),
    "G2": GammaPrior(2.5, 1.04),
    "U1": ModifiedUniform(2.0, 0.8),
    "U2": ModifiedUniform(4.0, 0.8),
}

_FORM = re.compile(r"^\s*(gamma|moduniform)\s*\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)\s*$", re.I)


def parse_prior(text: str) -> Prior:
    """Resolve ``G1``..``U2``, ``gamma(shape,scale)`` or ``moduniform(mu,p)``."""
    key = text.strip()
    if key.upper() in NAMED_PRIORS:
        return NAMED_PRIORS[key.upper()]
    match = _FORM.match(key)
    if not match:
        raise ConfigError(
            f"unknown prior {text!r}; use one of {sorted(NAMED_PRIORS)}, "
            "gamma(shape,scale) or moduniform(mu,p)"
        )
    family, x, y = match.groups()
    try:
        x, y = float(x), float(y)
    except ValueError as exc:
        raise ConfigError(f"non-numeric prior hyperparameter in {text!r}") from exc
    try:
        if family.lower() == "gamma":
            return GammaPrior(x, y)
        return ModifiedUniform(x, y)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


@njit(cache=True)
def _component_log_pdf(kind, first, second, x):
    if not x > 0.0:
        return -np.inf
    if kind == _KIND_GAMMA:
        return (first - 1.0) * math.log(x) - x / second - _log_gamma(first) - first * math.log(second)
    # modified uniform: first = mu, second = p
    log_height = math.log(second / first)
    if x <= first:
        return log_height
    return log_height - second * (x - first) / (first * (1.0 - second))


@njit(cache=True, inline="always")
def sample_component(state, kind, first, second):
    if kind == _KIND_GAMMA:
        return second * standard_gamma(state, first)
    # inverse CDF with a single uniform
    u = uniform(state)
    if u < second:
        return first * u / second
    rate = second / (first * (1.0 - second))
    return first - math.log((1.0 - u) / (1.0 - second)) / rate


@njit(cache=True)
def sample_product_into(state, kinds, first, second, out):
    for i in range(kinds.shape[0]):
        out[i] = sample_component(state, kinds[i], first[i], second[i])


@njit(cache=True)
def log_pdf_product(kinds, first, second, x):
    total = 0.0
    for i in range(kinds.shape[0]):
        total += _component_log_pdf(kinds[i], first[i], second[i], x[i])
        if total == -np.inf:
            return total
    return total


@njit(cache=True)
def _fill_component(state, kind, first, second, out):
    for i in range(out.size):
        out[i] = sample_component(state, kind, first, second)


def modified_uniform_pdf(prior: ModifiedUniform, x: float) -> float:
    """Density of ``U_p(0, mu)``; zero for x <= 0."""
    x = float(x)
    if x <= 0.0:
        return 0.0
    height = prior.p / prior.mu
    if x <= prior.mu:
        return height
    return height * math.exp(-prior.p * (x - prior.mu) / (prior.mu * (1.0 - prior.p)))


def modified_uniform_sample(stream: RngStream, prior: ModifiedUniform, size=None):
    if size is None:
        return float(sample_component(stream.state, _KIND_MODUNIF, prior.mu, prior.p))
    out = np.empty(size)
    _fill_component(stream.state, _KIND_MODUNIF, prior.mu, prior.p, out.reshape(-1))
    return out


def product_sample(stream: RngStream, prior: PriorProduct) -> np.ndarray:
    """One parameter vector with independent components, drawn in order."""
    out = np.empty(prior.dim)
    sample_product_into(stream.state, *prior.encoded(), out)
    return out


def product_log_pdf(prior: PriorProduct, x) -> float:
    """Sum of component log densities; ``-inf`` off the support."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != prior.dim:
        raise DimensionError(f"prior has {prior.dim} components, vector has {x.size}")
    return float(log_pdf_product(*prior.encoded(), x))
