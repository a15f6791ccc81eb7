"""Bivariate beta-binomial purchase tables: simulation, distances and ABC fits.

Each household k has purchase probabilities ``(p_b, p_e) ~ BB5(alpha)`` and
buys bacon ``X_b ~ Bin(trips, p_b)`` and eggs ``X_e ~ Bin(trips, p_e)``
times, independently given the probabilities.  Data are tabulated as a
``(trips + 1) x (trips + 1)`` count table indexed by (bacon, eggs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .abc import (
    ABCProblem,
    ABCResult,
    MHConfig,
    MHResult,
    ProposalKernel,
    abc_ar,
    abc_mh,
    mcse_batch_means,
    mcse_iid,
)
from .errors import ConfigError, DegenerateDataError, DimensionError, ParameterError
from .estimation import beta_binomial_mle
from .model import BB5Params, draw_bb8_pair, embed5_array, mc_correlation
from .numerics.rng import RngStream, binomial, substream
from .priors import GammaPrior, PriorProduct

__all__ = [
    "CountTable",
    "EBPriorSpec",
    "EBScore",
    "PosteriorSummary",
    "BaconEggsResult",
    "BACON_EGGS_PRIOR",
    "TRANSPOSED_PRIOR",
    "MH_PROPOSAL_SD",
    "SARMANOV_REFERENCE",
    "load_table",
    "save_table",
    "bundled_table",
    "simulate_table",
    "table_distance",
    "partial_transpose",
    "table_correlation",
    "marginal_mles",
    "eb_prior_score",
    "mean_accepted_table",
    "bacon_eggs_problem",
    "run_bacon_eggs",
]

PARAMETER_NAMES = ("alpha_1", "alpha_2", "alpha_3", "alpha_4", "alpha_5")
DERIVED_NAMES = ("alpha_b", "beta_b", "alpha_e", "beta_e")

# ε-ball MH random-walk step sizes for (alpha_1, ..., alpha_5)
MH_PROPOSAL_SD = (0.10, 0.10, 0.001, 0.001, 0.2)

# Published estimates of the Sarmanov bivariate beta fit, kept for comparison only
SARMANOV_REFERENCE = {"alpha_b": 0.357, "beta_b": 4.46, "alpha_e": 0.859, "beta_e": 3.96, "r": 0.430}

# stream-index offsets for auxiliary work derived from a run's stream
_PILOT_OFFSET = 1 << 62
_CORRELATION_OFFSET = 1 << 63


@dataclass(frozen=True)
class CountTable:
    """Square table of household counts, ``cells[l, j]`` = households with l bacon and j egg purchases."""

    cells: np.ndarray = field(repr=False)

    def __post_init__(self):
        raw = np.asarray(self.cells)
        if raw.ndim != 2 or raw.shape[0] != raw.shape[1] or raw.shape[0] < 2:
            raise DimensionError(f"count tables are square with side >= 2, got shape {raw.shape}")
        cells = raw.astype(np.int64)
        if not np.array_equal(cells, raw) or np.any(cells < 0):
            raise ParameterError("table cells must be nonnegative integers")
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)

    @property
    def trips(self) -> int:
        return self.cells.shape[0] - 1

    @property
    def households(self) -> int:
        return int(self.cells.sum())

    @property
    def bacon_totals(self) -> np.ndarray:
        return self.cells.sum(axis=1)

    @property
    def eggs_totals(self) -> np.ndarray:
        return self.cells.sum(axis=0)

    def __eq__(self, other):
        return isinstance(other, CountTable) and np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash(self.cells.tobytes())


def load_table(path, households: int | None = None) -> CountTable:
    """Read a whitespace-separated integer grid; ``#`` starts a comment.

    When ``households`` is given the cell total must equal it.
    """
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            try:
                rows.append([int(tok) for tok in line.split()])
            except ValueError as exc:
                raise ConfigError(f"{path}: non-integer cell in line {line!r}") from exc
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ConfigError(f"{path}: expected a square grid of integers")
    table = CountTable(np.array(rows))
    if households is not None and table.households != households:
        raise ConfigError(f"{path}: cells sum to {table.households}, expected {households}")
    return table


def save_table(table: CountTable, path) -> None:
    lines = [" ".join(str(v) for v in row) for row in table.cells]
    Path(path).write_text("\n".join(lines) + "\n")


def bundled_table(name: str) -> CountTable:
    """``"bacon_eggs"`` (548 households) or its partial transpose ``"bacon_eggs_transposed"``."""
    files = {"bacon_eggs": "bacon_eggs.txt", "bacon_eggs_transposed": "bacon_eggs_transposed.txt"}
    if name not in files:
        raise ConfigError(f"unknown bundled table {name!r}; choose from {sorted(files)}")
    with resources.as_file(resources.files("bbabc.data") / files[name]) as path:
        return load_table(path, households=548)


@njit(cache=True)
def _fill_table(state, delta, trips, households, observed, counts, epsilon):
    """Tabulate ``households`` simulated households into ``counts`` (flat, zeroed).

    Returns the L1 distance to ``observed``.  With equal totals the distance is
    twice the number of households beyond the observed count of their cell, so
    the loop stops as soon as that reaches ``epsilon``; the value returned is
    then a lower bound that is itself >= ``epsilon``.
    """
    side = trips + 1
    excess = 0
    for _ in range(households):
        pb, pe = draw_bb8_pair(state, delta)
        xb = binomial(state, trips, pb)
        xe = binomial(state, trips, pe)
        c = xb * side + xe
        counts[c] += 1
        if counts[c] > observed[c]:
            excess += 1
            if 2.0 * excess >= epsilon:
                return 2.0 * excess
    total = 0.0
    for c in range(counts.shape[0]):
        total += abs(counts[c] - observed[c])
    return total


@njit(cache=True)
def _table_sim_distance(state, theta, ctx, aux, epsilon):
    observed, trips, households = ctx
    counts = np.zeros(observed.shape[0], dtype=np.int64)
    dist = _fill_table(state, embed5_array(theta), trips, households, observed, counts, epsilon)
    for c in range(counts.shape[0]):
        aux[c] = counts[c]
    return dist


def _check_positive_int(name, value, minimum=1):
    if int(value) != value or value < minimum:
        raise ParameterError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def simulate_table(stream: RngStream, params: BB5Params, households: int, trips: int = 4) -> CountTable:
    """Simulate one table: per household a (p_b, p_e) draw, then the two binomial counts."""
    if not isinstance(params, BB5Params):
        raise ParameterError("simulate_table needs BB5Params")
    households = _check_positive_int("households", households)
    trips = _check_positive_int("trips", trips)
    side = trips + 1
    counts = np.zeros(side * side, dtype=np.int64)
    # an unreachable observed table and infinite tolerance disable the early stop
    never = np.full(side * side, households + 1, dtype=np.int64)
    _fill_table(stream.state, embed5_array(params.as_array()), trips, households, never, counts, math.inf)
    return CountTable(counts.reshape(side, side))


def table_distance(a: CountTable, b: CountTable) -> int:
    """Sum of absolute cell differences."""
    if a.cells.shape != b.cells.shape:
        raise DimensionError(f"tables of shape {a.cells.shape} and {b.cells.shape} are not comparable")
    return int(np.abs(a.cells - b.cells).sum())


def partial_transpose(table: CountTable) -> CountTable:
    """Reverse the eggs axis: cell (l, j) becomes cell (l, trips - j)."""
    return CountTable(table.cells[:, ::-1].copy())


def table_correlation(table: CountTable) -> float:
    """Pearson correlation of the household-level (bacon, eggs) pairs the table aggregates."""
    w = table.cells.astype(np.float64)
    n = w.sum()
    if n == 0:
        raise DegenerateDataError("empty table")
    k = np.arange(table.trips + 1, dtype=np.float64)
    pb = w.sum(axis=1) / n
    pe = w.sum(axis=0) / n
    mb, me = pb @ k, pe @ k
    vb = pb @ (k - mb) ** 2
    ve = pe @ (k - me) ** 2
    if vb == 0.0 or ve == 0.0:
        raise DegenerateDataError("a margin of the table has no variation")
    cov = (k - mb) @ (w / n) @ (k - me)
    return float(cov / math.sqrt(vb * ve))


def marginal_mles(table: CountTable) -> tuple[float, float, float, float]:
    """Beta-binomial MLEs (alpha_b, beta_b, alpha_e, beta_e) of the two margins."""
    ab, bb = beta_binomial_mle(table.bacon_totals, table.trips)
    ae, be = beta_binomial_mle(table.eggs_totals, table.trips)
    return ab, bb, ae, be


@dataclass(frozen=True)
class EBPriorSpec:
    """Independent ``Gamma(m_i^2, scale 1/m_i)`` priors: mean ``m_i`` and unit variance."""

    prior_means: tuple[float, ...]
    target_correlation: float = math.nan

    def __post_init__(self):
        means = tuple(float(m) for m in self.prior_means)
        if len(means) != 5:
            raise DimensionError(f"need 5 prior means, got {len(means)}")
        if not all(m > 0 and math.isfinite(m) for m in means):
            raise ParameterError(f"prior means must be positive, got {means}")
        object.__setattr__(self, "prior_means", means)

    def prior(self) -> PriorProduct:
        return PriorProduct(tuple(GammaPrior(m * m, 1.0 / m) for m in self.prior_means))


BACON_EGGS_PRIOR = EBPriorSpec((1.6182, 1.9932, 0.1684, 0.1702, 3.1234), 0.30)
TRANSPOSED_PRIOR = EBPriorSpec((0.9173, 1.7502, 0.8462, 1.1421, 0.4852), -0.30)


@dataclass(frozen=True)
class EBScore:
    residuals: tuple[float, float, float, float]
    mc_correlation: float
    target_correlation: float

    @property
    def correlation_gap(self) -> float:
        return self.mc_correlation - self.target_correlation


def eb_prior_score(
    candidate_means: Sequence[float],
    mles: Sequence[float],
    target_correlation: float,
    stream: RngStream,
    draws: int = 1_000_000,
) -> EBScore:
    """How well candidate prior means match the marginal MLEs and a target correlation.

    ``residuals`` are (m1 + m3 - alpha_b, m4 + m5 - beta_b, m2 + m4 - alpha_e,
    m3 + m5 - beta_e); the correlation is a Monte Carlo estimate at the
    candidate means.
    """
    m = EBPriorSpec(candidate_means).prior_means
    ab, bb, ae, be = (float(v) for v in mles)
    residuals = (m[0] + m[2] - ab, m[3] + m[4] - bb, m[1] + m[3] - ae, m[2] + m[4] - be)
    corr = mc_correlation(stream, BB5Params(m), draws)
    return EBScore(residuals, corr, float(target_correlation))


def mean_accepted_table(tables) -> np.ndarray:
    """Cellwise mean of a nonempty collection of tables (or of their cell arrays)."""
    arrays = [t.cells if isinstance(t, CountTable) else np.asarray(t) for t in tables]
    if not arrays:
        raise ValueError("mean of an empty collection of tables")
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise DimensionError("tables differ in shape")
    return np.mean(np.stack(arrays).astype(np.float64), axis=0)


def bacon_eggs_problem(observed: CountTable, prior: EBPriorSpec | PriorProduct, epsilon: float) -> ABCProblem:
    """ABC problem whose simulated data are whole tables compared cell by cell."""
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon!r}")
    prior = prior.prior() if isinstance(prior, EBPriorSpec) else prior
    if prior.dim != 5:
        raise DimensionError(f"table model has 5 parameters, prior has {prior.dim}")
    trips, households = observed.trips, observed.households
    flat = np.ascontiguousarray(observed.cells.reshape(-1))

    def simulate(stream, theta):
        return simulate_table(stream, BB5Params(theta), households, trips)

    def summarize(table):
        return table.cells.reshape(-1)

    def distance(a, b):
        return float(np.abs(np.asarray(a) - np.asarray(b)).sum())

    return ABCProblem(
        prior=prior,
        simulate=simulate,
        summarize=summarize,
        distance=distance,
        observed_summary=flat.astype(np.float64),
        epsilon=float(epsilon),
        kernel=ProposalKernel(_table_sim_distance, (flat, np.int64(trips), np.int64(households)), flat.size),
        record=lambda table, summary: summary.astype(np.float64),
    )


@dataclass
class PosteriorSummary:
    """Posterior means with Monte Carlo standard errors, keyed by parameter name."""

    names: tuple[str, ...]
    means: np.ndarray
    mcse: np.ndarray

    def __getitem__(self, name: str) -> tuple[float, float]:
        i = self.names.index(name)
        return float(self.means[i]), float(self.mcse[i])

    def rows(self):
        return [(n, float(m), float(s)) for n, m, s in zip(self.names, self.means, self.mcse)]


@dataclass
class BaconEggsResult:
    variant: str
    engine: ABCResult | MHResult = field(repr=False)
    summary: PosteriorSummary
    r: float
    mean_table: np.ndarray | None = field(repr=False)
    initial_state: tuple[float, ...] | None = None

    def to_csv(self, path) -> None:
        """Write ``parameter,posterior_mean,mcse`` rows; r has no standard error."""
        import csv

        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["parameter", "posterior_mean", "mcse"])
            for name, mean, se in self.summary.rows():
                writer.writerow([name, repr(mean), repr(se)])
            writer.writerow(["r", repr(self.r), ""])


def _with_derived(sample: np.ndarray) -> np.ndarray:
    a1, a2, a3, a4, a5 = sample.T
    return np.column_stack([sample, a1 + a3, a4 + a5, a2 + a4, a3 + a5])


def run_bacon_eggs(
    variant: str,
    observed: CountTable,
    prior: EBPriorSpec,
    epsilon: float,
    stream: RngStream,
    *,
    acceptances: int = 500,
    proposal_cap: int = 15_000_000,
    iterations: int = 2_000_000,
    proposal_sd: Sequence[float] = MH_PROPOSAL_SD,
    initial_state: Sequence[float] | None = None,
    burn_in_fraction: float = 0.1,
    pilot_acceptances: int = 50,
    correlation_draws: int = 1_000_000,
    mcse_batches: int = 50,
) -> BaconEggsResult:
    """Fit the table model by accept-reject (``"ar"``) or Metropolis-Hastings (``"mh"``) ABC.

    Without ``initial_state`` the MH chain starts at the posterior mean of a
    short accept-reject pilot run (``pilot_acceptances`` draws) on a stream
    derived from ``stream``.  The reported ``r`` is the Monte Carlo correlation
    of (p_b, p_e) at the posterior mean.
    """
    variant = variant.lower()
    if variant not in ("ar", "mh"):
        raise ConfigError(f"variant must be 'ar' or 'mh', got {variant!r}")
    problem = bacon_eggs_problem(observed, prior, epsilon)
    seed, base = stream.master_seed, stream.stream_index
    mean_table = None
    start = None
    if variant == "ar":
        engine = abc_ar(problem, acceptances, proposal_cap, stream)
        if engine.acceptances < 2:
            raise DegenerateDataError(f"only {engine.acceptances} acceptances within the proposal cap")
        sample = _with_derived(engine.accepted)
        mcse = np.array([mcse_iid(col) for col in sample.T])
        side = observed.trips + 1
        mean_table = mean_accepted_table(engine.aux.reshape(-1, side, side))
    else:
        if initial_state is None:
            pilot = abc_ar(problem, pilot_acceptances, proposal_cap, substream(seed, (base + _PILOT_OFFSET) % 2**64))
            if pilot.acceptances == 0:
                raise DegenerateDataError("pilot run found no acceptable starting point")
            initial_state = pilot.posterior_mean()
        start = tuple(float(v) for v in initial_state)
        config = MHConfig(start, tuple(proposal_sd), iterations, burn_in_fraction)
        engine = abc_mh(problem, config, stream)
        sample = _with_derived(engine.kept)
        mcse = np.array([mcse_batch_means(col, mcse_batches) for col in sample.T])
    means = sample.mean(axis=0)
    r = mc_correlation(substream(seed, (base + _CORRELATION_OFFSET) % 2**64), BB5Params(means[:5]), correlation_draws)
    summary = PosteriorSummary(PARAMETER_NAMES + DERIVED_NAMES, means, mcse)
    return BaconEggsResult(variant, engine, summary, r, mean_table, start)
