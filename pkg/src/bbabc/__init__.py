"""Bivariate beta distributions fitted by approximate Bayesian computation."""

import numba as _numba

# skip probing for TBB, which is not installed everywhere and warns when missing
_numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .abc import ABCProblem, ABCResult, MHConfig, MHResult, abc_ar, abc_mh, set_workers  # noqa: E402
from .errors import (  # noqa: E402
    ConfigError,
    ConvergenceError,
    DegenerateDataError,
    DimensionError,
    ParameterError,
    PoleError,
)
from .estimation import beta_binomial_mle, beta_mle, mmle5  # noqa: E402
from .model import (  # noqa: E402
    BB5Params,
    BB8Params,
    BivariateDataset,
    embed_bb5,
    marginal_params,
    mc_correlation,
    sample_bb5,
    sample_bb8,
    theoretical_cross_moment,
)
from .numerics import RngStream, substream  # noqa: E402
from .priors import NAMED_PRIORS, GammaPrior, ModifiedUniform, PriorProduct, parse_prior  # noqa: E402
from .summaries import SummaryVector, l1_distance, summaries5, summaries8  # noqa: E402

__version__ = "0.1.0"
