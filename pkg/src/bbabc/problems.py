"""ABC problems for the bivariate beta models with the S1-S5 / S1-S8 summaries."""

from __future__ import annotations

import numpy as np
from numba import njit

from .abc import ABCProblem, ProposalKernel
from .errors import DimensionError
from .model import BB5Params, BB8Params, BivariateDataset, embed5_array, fill_bb8, sample_bb5, sample_bb8
from .priors import PriorProduct
from .summaries import l1, l1_distance, summaries5, summaries8, summaries_into

__all__ = ["bivariate_beta_problem"]


@njit(cache=True)
def _bb_sim_distance(state, theta, ctx, aux, epsilon):
    observed, n, eight, raw_spearman = ctx
    delta = theta if eight else embed5_array(theta)
    z = np.empty((n, 2))
    fill_bb8(state, delta, z)
    summaries_into(z, aux, raw_spearman)
    return l1(aux, observed)


def bivariate_beta_problem(
    observed: BivariateDataset,
    model: str,
    prior: PriorProduct,
    epsilon: float,
    *,
    raw_spearman: bool = False,
) -> ABCProblem:
    """ABC problem for data from the 5- (``"bb5"``) or 8-parameter (``"bb8"``) law.

    Simulated datasets have the observed size; accepted proposals keep their
    simulated summary vector as the diagnostics row.
    """
    if model not in ("bb5", "bb8"):
        raise ValueError(f"model must be 'bb5' or 'bb8', got {model!r}")
    k = 5 if model == "bb5" else 8
    if prior.dim != k:
        raise DimensionError(f"{model} needs a {k}-component prior, got {prior.dim}")
    n = observed.n
    if model == "bb5":
        summarize = summaries5

        def simulate(stream, theta):
            return sample_bb5(stream, BB5Params(theta), n)
    else:

        def summarize(data):
            return summaries8(data, raw_spearman)

        def simulate(stream, theta):
            return sample_bb8(stream, BB8Params(theta), n)

    observed_summary = np.asarray(summarize(observed).values, dtype=np.float64)
    kernel = ProposalKernel(
        sim_distance=_bb_sim_distance,
        ctx=(observed_summary, np.int64(n), k == 8, bool(raw_spearman)),
        aux_size=k,
    )
    return ABCProblem(
        prior=prior,
        simulate=simulate,
        summarize=summarize,
        distance=l1_distance,
        observed_summary=observed_summary,
        epsilon=float(epsilon),
        kernel=kernel,
        record=lambda data, summary: np.asarray(summary.values),
    )
