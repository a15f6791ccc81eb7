"""Counter-based random streams and exact variate generators.

Every stream is a Philox4x32-10 counter generator.  The 64-bit master seed
(scrambled once with splitmix64) is the Philox key, and the 128-bit counter
is split into a 64-bit stream index (high half) and a 64-bit block counter
(low half).  Two streams with different indices therefore walk disjoint
counter ranges and can never overlap, and a stream can be created in any
order on any thread.

The stream state is a small ``uint64`` array so that jitted kernels can own
and advance it without going through Python objects::

    state[0]  Philox key (scrambled master seed)
    state[1]  stream index
    state[2]  next block counter
    state[3]  1 if a cached 64-bit word is available
    state[4]  cached word

Each Philox block yields two 64-bit words; the second is cached.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = [
    "RngStream",
    "substream",
    "draw_uniform",
    "draw_normal",
    "draw_gamma",
    "draw_beta",
    "draw_binomial",
]

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_TWO_M53 = 1.0 / 9007199254740992.0
_STATE_LEN = 5


@njit(cache=True)
def splitmix64(x):
    x = np.uint64(x) + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@njit(cache=True, inline='always')
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x32 block function on 32-bit words held in uint64."""
    for r in range(10):
        if r > 0:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _SHIFT32
        lo0 = p0 & _MASK32
        hi1 = p1 >> _SHIFT32
        lo1 = p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit(cache=True)
def init_state(state, master_seed, stream_index):
    state[0] = splitmix64(np.uint64(master_seed))
    state[1] = np.uint64(stream_index)
    state[2] = np.uint64(0)
    state[3] = np.uint64(0)
    state[4] = np.uint64(0)


@njit(cache=True)
def new_state(master_seed, stream_index):
    state = np.empty(_STATE_LEN, dtype=np.uint64)
    init_state(state, master_seed, stream_index)
    return state


@njit(cache=True, inline='always')
def next_u64(state):
    if state[3] != 0:
        state[3] = np.uint64(0)
        return state[4]
    key = state[0]
    stream = state[1]
    block = state[2]
    x0, x1, x2, x3 = philox4x32(
        block & _MASK32,
        block >> _SHIFT32,
        stream & _MASK32,
        stream >> _SHIFT32,
        key & _MASK32,
        key >> _SHIFT32,
    )
    state[2] = block + np.uint64(1)
    state[3] = np.uint64(1)
    state[4] = (x3 << _SHIFT32) | x2
    return (x1 << _SHIFT32) | x0


@njit(cache=True, inline='always')
def uniform(state):
    """Uniform double on the open interval (0, 1), 53-bit resolution."""
    return (float(next_u64(state) >> np.uint64(11)) + 0.5) * _TWO_M53


@njit(cache=True, inline='always')
def normal(state):
    # Box-Muller; the sine partner is discarded so each call is stateless
    # apart from the stream position.
    u1 = uniform(state)
    u2 = uniform(state)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(cache=True, inline='always')
def _gamma_ge1(state, shape):
    # Marsaglia-Tsang squeeze/rejection, shape >= 1.
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = normal(state)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = uniform(state)
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v
        if math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
            return d * v


@njit(cache=True)
def standard_gamma(state, shape):
    """Gamma(shape, 1) draw, exact for every shape > 0.

    Shapes below one use Gamma(a) = Gamma(a + 1) * U**(1/a): the Gamma(a + 1)
    draw comes first, then one uniform.
    """
    if shape >= 1.0:
        return _gamma_ge1(state, shape)
    g = _gamma_ge1(state, shape + 1.0)
    return g * math.exp(math.log(uniform(state)) / shape)


@njit(cache=True)
def log_standard_gamma(state, shape):
    """Log of a Gamma(shape, 1) draw; same stream use as :func:`standard_gamma`.

    Stays finite where the plain draw would underflow (tiny shapes).
    """
    if shape >= 1.0:
        return math.log(_gamma_ge1(state, shape))
    g = _gamma_ge1(state, shape + 1.0)
    return math.log(g) + math.log(uniform(state)) / shape


@njit(cache=True, inline='always')
def open_unit(z):
    # Clamp to the open unit interval; only reachable when a gamma sum
    # underflows for extremely small shapes (0/0 lands here as NaN too).
    if not z > 0.0:
        return 5e-324
    if z >= 1.0:
        return 1.0 - 1.1102230246251565e-16
    return z


@njit(cache=True)
def beta(state, a, b):
    la = log_standard_gamma(state, a)
    lb = log_standard_gamma(state, b)
    # G_a / (G_a + G_b) as a logistic of the log ratio
    return open_unit(1.0 / (1.0 + math.exp(lb - la)))


_INVERSION_MAX_TRIALS = 64


@njit(cache=True)
def binomial(state, trials, p):
    """Binomial(trials, p) draw.

    Up to 64 trials: inversion of the CDF with one uniform (the smaller of
    p, 1 - p is used so the walk is short).  Beyond that: a sum of Bernoulli
    indicators.
    """
    if trials > _INVERSION_MAX_TRIALS:
        k = 0
        for _ in range(trials):
            if uniform(state) < p:
                k += 1
        return k
    flip = p > 0.5
    q = 1.0 - p if flip else p
    u = uniform(state)
    if q == 0.0:
        return trials if flip else 0
    ratio = q / (1.0 - q)
    f = (1.0 - q) ** trials
    k = 0
    while u > f and k < trials:
        u -= f
        f *= ratio * (trials - k) / (k + 1)
        k += 1
    return trials - k if flip else k


@njit(cache=True)
def _fill_uniform(state, out):
    for i in range(out.size):
        out[i] = uniform(state)


@njit(cache=True)
def _fill_normal(state, out):
    for i in range(out.size):
        out[i] = normal(state)


@njit(cache=True)
def _fill_gamma(state, shape, scale, out):
    for i in range(out.size):
        out[i] = scale * standard_gamma(state, shape)


@njit(cache=True)
def _fill_beta(state, a, b, out):
    for i in range(out.size):
        out[i] = beta(state, a, b)


@njit(cache=True)
def _fill_binomial(state, trials, p, out):
    for i in range(out.size):
        out[i] = binomial(state, trials, p)


class RngStream:
    """One reproducible random stream identified by ``(master_seed, stream_index)``.

    A stream is single-owner: hand it to one worker at a time.  Use
    :func:`substream` to build one.
    """

    __slots__ = ("master_seed", "stream_index", "state")

    def __init__(self, master_seed: int, stream_index: int = 0):
        if not 0 <= master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if not 0 <= stream_index < 2**64:
            raise ValueError("stream_index must be a nonnegative 64-bit integer")
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        self.state = new_state(np.uint64(master_seed), np.uint64(stream_index))

    def __repr__(self):
        return (
            f"RngStream(master_seed={self.master_seed}, "
            f"stream_index={self.stream_index}, block={int(self.state[2])})"
        )

    @property
    def position(self) -> tuple[int, int]:
        """(blocks consumed, cached word pending) - enough to compare progress."""
        return int(self.state[2]), int(self.state[3])

    def uniform(self, size=None):
        if size is None:
            return uniform(self.state)
        out = np.empty(size, dtype=np.float64)
        _fill_uniform(self.state, out.reshape(-1))
        return out

    def normal(self, size=None):
        if size is None:
            return normal(self.state)
        out = np.empty(size, dtype=np.float64)
        _fill_normal(self.state, out.reshape(-1))
        return out


def substream(master_seed: int, index: int) -> RngStream:
    """Stream number ``index`` under ``master_seed``.

    Derivation is a pure function of the pair, so streams can be requested in
    any order and on any worker.
    """
    return RngStream(master_seed, index)


def _check_positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")


def draw_uniform(stream: RngStream, size=None):
    return stream.uniform(size)


def draw_normal(stream: RngStream, size=None):
    return stream.normal(size)


def draw_gamma(stream: RngStream, shape: float, scale: float = 1.0, size=None):
    """Gamma(shape, scale) variate(s); ``scale`` multiplies, so the mean is shape*scale."""
    _check_positive("shape", shape)
    _check_positive("scale", scale)
    if size is None:
        return scale * standard_gamma(stream.state, float(shape))
    out = np.empty(size, dtype=np.float64)
    _fill_gamma(stream.state, float(shape), float(scale), out.reshape(-1))
    return out


def draw_beta(stream: RngStream, a: float, b: float, size=None):
    """Beta(a, b) variate(s) as G_a / (G_a + G_b), always strictly inside (0, 1)."""
    _check_positive("a", a)
    _check_positive("b", b)
    if size is None:
        return beta(stream.state, float(a), float(b))
    out = np.empty(size, dtype=np.float64)
    _fill_beta(stream.state, float(a), float(b), out.reshape(-1))
    return out


def draw_binomial(stream: RngStream, trials: int, p: float, size=None):
    if trials < 0:
        raise ValueError("trials must be nonnegative")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    if size is None:
        return int(binomial(stream.state, int(trials), float(p)))
    out = np.empty(size, dtype=np.int64)
    _fill_binomial(stream.state, int(trials), float(p), out.reshape(-1))
    return out
