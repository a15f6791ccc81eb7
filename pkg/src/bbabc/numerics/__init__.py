"""Special functions and reproducible random variates."""

from .rng import (
    RngStream,
    draw_beta,
    draw_binomial,
    draw_gamma,
    draw_normal,
    draw_uniform,
    substream,
)
from .special import digamma, log_beta, log_gamma, trigamma

__all__ = [
    "RngStream",
    "substream",
    "draw_uniform",
    "draw_normal",
    "draw_gamma",
    "draw_beta",
    "draw_binomial",
    "log_gamma",
    "digamma",
    "trigamma",
    "log_beta",
]
