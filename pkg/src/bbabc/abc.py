"""Accept-reject and Metropolis-Hastings approximate Bayesian computation.

Both engines are model-agnostic.  A problem supplies a prior, a simulator, a
summary map, a distance and a tolerance.  It may also carry a
:class:`ProposalKernel`: a jitted function doing simulate-summarize-distance
for one parameter vector, which the engines then run in compiled loops.  The
kernel must use the random stream exactly like the Python callables, so
both routes give identical results; the test-suite checks this.

Accept-reject reproducibility contract: proposal ``i`` of a run started
from ``stream`` uses ``substream(stream.master_seed, stream.stream_index + i)``
for its prior draw followed by its simulation.  Whether proposal ``i`` is
accepted depends on that stream alone.  Proposals are evaluated in batches
(in parallel when more than one worker is configured) and accepted in index
order, so the result does not depend on batch size or worker count.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numba
import numpy as np
from numba import njit, prange

from .errors import ConfigError, DegenerateDataError, DimensionError, ParameterError
from .numerics.rng import RngStream, new_state, normal, substream, uniform
from .priors import PriorProduct, log_pdf_product, product_log_pdf, product_sample, sample_product_into

__all__ = [
    "ProposalKernel",
    "ABCProblem",
    "ABCResult",
    "MHConfig",
    "MHResult",
    "abc_ar",
    "abc_mh",
    "mh_acceptance_probability",
    "posterior_mean",
    "mcse_batch_means",
    "mcse_iid",
    "set_workers",
]

log = logging.getLogger(__name__)

_FIRST_BATCH = 1024
_MAX_BATCH = 32768


@dataclass(frozen=True)
class ProposalKernel:
    """Compiled simulate-summarize-distance step.

    ``sim_distance(state, theta, ctx, aux_row, epsilon) -> float`` advances
    the stream ``state``, may write ``aux_size`` diagnostics into ``aux_row``
    and returns the distance to the observed summary.  It may stop early and
    return any value >= ``epsilon`` once rejection is certain.
    """

    sim_distance: Any
    ctx: tuple
    aux_size: int = 0


@dataclass
class ABCProblem:
    prior: PriorProduct
    simulate: Callable[[RngStream, np.ndarray], Any]
    summarize: Callable[[Any], Any]
    distance: Callable[[Any, Any], float]
    observed_summary: Any
    epsilon: float
    kernel: ProposalKernel | None = None
    # optional (data, summary) -> 1-D diagnostics row kept for accepted proposals
    record: Callable[[Any, Any], np.ndarray] | None = None

    def __post_init__(self):
        if not self.epsilon >= 0.0:
            raise ConfigError(f"epsilon must be nonnegative, got {self.epsilon!r}")
        obs = np.asarray(self.observed_summary, dtype=np.float64)
        if not np.all(np.isfinite(obs)):
            raise ConfigError("observed summary must be finite")

    @property
    def dim(self) -> int:
        return self.prior.dim

    def evaluate(self, stream: RngStream, theta: np.ndarray):
        """Simulate at ``theta`` and return (distance, diagnostics row) using the Python callables."""
        data = self.simulate(stream, theta)
        try:
            summary = self.summarize(data)
        except DegenerateDataError:
            return math.inf, None
        dist = float(self.distance(summary, self.observed_summary))
        if not dist < math.inf:
            dist = math.inf
        aux = None if self.record is None else np.asarray(self.record(data, summary), dtype=np.float64)
        return dist, aux


@dataclass
class ABCResult:
    accepted: np.ndarray
    proposals_used: int
    acceptances: int
    capped: bool
    wall_time: float
    target: int
    indices: np.ndarray = field(repr=False)
    distances: np.ndarray = field(repr=False)
    aux: np.ndarray | None = field(default=None, repr=False)

    @property
    def acceptance_rate(self) -> float:
        return self.acceptances / self.proposals_used if self.proposals_used else 0.0

    def posterior_mean(self) -> np.ndarray:
        return posterior_mean(self.accepted)


@dataclass(frozen=True)
class MHConfig:
    """Random-walk settings; ``initial_state=None`` starts at the prior means."""

    initial_state: tuple[float, ...] | None
    proposal_sd: tuple[float, ...]
    iterations: int
    burn_in_fraction: float = 0.1

    def __post_init__(self):
        sd = tuple(float(v) for v in self.proposal_sd)
        object.__setattr__(self, "proposal_sd", sd)
        init = None if self.initial_state is None else tuple(float(v) for v in self.initial_state)
        object.__setattr__(self, "initial_state", init)
        if init is not None and len(init) != len(sd):
            raise DimensionError("initial_state and proposal_sd differ in length")
        if not all(s > 0 and math.isfinite(s) for s in sd):
            raise ConfigError(f"proposal standard deviations must be positive, got {sd}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ConfigError("iterations must be a positive integer")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ConfigError("burn_in_fraction must lie in [0, 1)")


@dataclass
class MHResult:
    """Chain of states; ``chain[0]`` is the initial state, ``chain[m]`` the state after step m."""

    chain: np.ndarray
    moves: int
    simulations: int
    wall_time: float
    burn_in: int
    aux_last: np.ndarray | None = field(default=None, repr=False)

    @property
    def kept(self) -> np.ndarray:
        return self.chain[self.burn_in :]

    def posterior_mean(self) -> np.ndarray:
        return posterior_mean(self.kept)


def set_workers(workers: int | None) -> int:
    """Set the number of threads used by parallel kernels; returns the number in effect."""
    if workers is not None:
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        numba.set_num_threads(min(int(workers), numba.config.NUMBA_NUM_THREADS))
    return numba.get_num_threads()


# Kernels that take a jitted function argument are not cached: the on-disk
# index would hold references to dispatchers that a later process may not
# have loaded, and numba then fails while rewriting it.
@njit(parallel=True)
def _evaluate_batch(sim_distance, ctx, kinds, first, second, master_seed, first_index, epsilon,
                    thetas, distances, aux):
    for j in prange(thetas.shape[0]):
        state = new_state(master_seed, first_index + np.uint64(j))
        sample_product_into(state, kinds, first, second, thetas[j])
        distances[j] = sim_distance(state, thetas[j], ctx, aux[j], epsilon)


def _evaluate_python(problem, master_seed, first_index, thetas, distances, aux_rows):
    for j in range(thetas.shape[0]):
        s = substream(master_seed, first_index + j)
        thetas[j] = product_sample(s, problem.prior)
        distances[j], aux_rows[j] = problem.evaluate(s, thetas[j])


def abc_ar(
    problem: ABCProblem,
    target_acceptances: int,
    proposal_cap: int,
    stream: RngStream,
    *,
    use_kernel: bool = True,
    batch_size: int | None = None,
) -> ABCResult:
    """Accept-reject ABC: keep prior draws whose simulated summaries land within epsilon.

    Stops at ``target_acceptances`` or after ``proposal_cap`` proposals,
    whichever comes first; in the latter case ``capped`` is set and the
    partial sample is returned.  Acceptance uses the strict ``distance < epsilon``.
    """
    if target_acceptances < 1:
        raise ConfigError("target_acceptances must be >= 1")
    if proposal_cap < 1:
        raise ConfigError("proposal_cap must be >= 1")
    kernel = problem.kernel if use_kernel else None
    kinds, first, second = problem.prior.encoded()
    k = problem.dim
    seed = stream.master_seed
    base = stream.stream_index
    eps = float(problem.epsilon)

    started = time.perf_counter()
    thetas_acc, dist_acc, idx_acc, aux_acc = [], [], [], []
    need = int(target_acceptances)
    index = 0
    batch = batch_size or _FIRST_BATCH
    proposals_used = 0
    while need > 0 and index < proposal_cap:
        count = min(batch, proposal_cap - index)
        thetas = np.empty((count, k))
        distances = np.empty(count)
        if kernel is not None:
            aux = np.zeros((count, max(kernel.aux_size, 1)))
            _evaluate_batch(
                kernel.sim_distance, kernel.ctx, kinds, first, second,
                np.uint64(seed), np.uint64(base + index), eps, thetas, distances, aux,
            )
            aux_rows = aux[:, : kernel.aux_size] if kernel.aux_size else None
        else:
            rows = [None] * count
            _evaluate_python(problem, seed, base + index, thetas, distances, rows)
            aux_rows = None if problem.record is None else rows
        hits = np.flatnonzero(distances < eps)
        if hits.size >= need:
            hits = hits[:need]
            proposals_used = index + int(hits[-1]) + 1
        else:
            proposals_used = index + count
        thetas_acc.append(thetas[hits])
        dist_acc.append(distances[hits])
        idx_acc.append(hits + index)
        if aux_rows is not None:
            aux_acc.extend(np.asarray(aux_rows[h], dtype=np.float64) for h in hits)
        need -= hits.size
        index += count
        log.debug("abc_ar: %d proposals, %d accepted", proposals_used, target_acceptances - need)
        if batch_size is None:
            batch = min(2 * batch, _MAX_BATCH)

    accepted = np.concatenate(thetas_acc) if thetas_acc else np.empty((0, k))
    aux_out = None
    if aux_acc or (kernel is not None and kernel.aux_size) or problem.record is not None:
        width = kernel.aux_size if kernel is not None else (aux_acc[0].size if aux_acc else 0)
        aux_out = np.vstack(aux_acc) if aux_acc else np.empty((0, width))
    return ABCResult(
        accepted=accepted,
        proposals_used=proposals_used,
        acceptances=accepted.shape[0],
        capped=accepted.shape[0] < target_acceptances,
        wall_time=time.perf_counter() - started,
        target=int(target_acceptances),
        indices=np.concatenate(idx_acc) if idx_acc else np.empty(0, dtype=np.int64),
        distances=np.concatenate(dist_acc) if dist_acc else np.empty(0),
        aux=aux_out,
    )


def mh_acceptance_probability(prior_ratio: float, indicator: bool) -> float:
    """min{1, prior_ratio * 1[distance < epsilon]}."""
    return min(1.0, prior_ratio * float(bool(indicator)))


@njit
def _mh_chain(sim_distance, ctx, kinds, first, second, state, master_seed, base, sd, epsilon, chain, aux):
    k = chain.shape[1]
    current = chain[0].copy()
    current_lp = log_pdf_product(kinds, first, second, current)
    proposal = np.empty(k)
    moves = 0
    sims = 0
    for m in range(1, chain.shape[0]):
        for c in range(k):
            proposal[c] = current[c] + sd[c] * normal(state)
        lp = log_pdf_product(kinds, first, second, proposal)
        if lp > -np.inf:
            u = uniform(state)
            if math.log(u) < lp - current_lp:
                sims += 1
                sim_state = new_state(master_seed, base + np.uint64(m))
                if sim_distance(sim_state, proposal, ctx, aux, epsilon) < epsilon:
                    current[:] = proposal
                    current_lp = lp
                    moves += 1
        chain[m] = current
    return moves, sims


def _mh_python(problem, state_stream, sd, chain):
    k = chain.shape[1]
    current = chain[0].copy()
    current_lp = product_log_pdf(problem.prior, current)
    moves = sims = 0
    for m in range(1, chain.shape[0]):
        proposal = current + sd * state_stream.normal(k)
        lp = product_log_pdf(problem.prior, proposal)
        if lp > -math.inf:
            u = state_stream.uniform()
            if math.log(u) < lp - current_lp:
                sims += 1
                sim_stream = substream(state_stream.master_seed, state_stream.stream_index + m)
                dist, _ = problem.evaluate(sim_stream, proposal)
                if dist < problem.epsilon:
                    current = proposal
                    current_lp = lp
                    moves += 1
        chain[m] = current
    return moves, sims


def abc_mh(problem: ABCProblem, config: MHConfig, stream: RngStream, *, use_kernel: bool = True) -> MHResult:
    """Random-walk Metropolis-Hastings ABC.

    Each step proposes independent normal moves per component and moves with
    probability ``min{1, prior ratio * 1[distance < epsilon]}``.  The uniform
    for the prior-ratio test is drawn first and the data are only simulated
    when that test passes, which leaves the transition law unchanged.
    Proposals outside the prior support are rejected without a draw.

    Proposals and uniforms come from ``stream``; the simulation at step ``m``
    uses ``substream(stream.master_seed, stream.stream_index + m)``, so a
    kernel that stops a rejected simulation early leaves the chain unchanged.
    """
    if config.initial_state is None:
        init = problem.prior.means
    else:
        init = np.asarray(config.initial_state, dtype=np.float64)
    if init.size != problem.dim or len(config.proposal_sd) != problem.dim:
        raise DimensionError(
            f"initial state / proposal_sd sizes ({init.size}, {len(config.proposal_sd)}) "
            f"do not match the {problem.dim}-component prior"
        )
    if product_log_pdf(problem.prior, init) == -math.inf:
        raise ParameterError("initial state lies outside the prior support")
    sd = np.asarray(config.proposal_sd, dtype=np.float64)
    chain = np.empty((int(config.iterations), problem.dim))
    chain[0] = init
    started = time.perf_counter()
    kernel = problem.kernel if use_kernel else None
    aux = None
    if kernel is not None:
        aux = np.zeros(max(kernel.aux_size, 1))
        moves, sims = _mh_chain(
            kernel.sim_distance, kernel.ctx, *problem.prior.encoded(),
            stream.state, np.uint64(stream.master_seed), np.uint64(stream.stream_index),
            sd, float(problem.epsilon), chain, aux,
        )
    else:
        moves, sims = _mh_python(problem, stream, sd, chain)
    return MHResult(
        chain=chain,
        moves=int(moves),
        simulations=int(sims),
        wall_time=time.perf_counter() - started,
        burn_in=int(config.burn_in_fraction * chain.shape[0]),
        aux_last=aux,
    )


def posterior_mean(accepted) -> np.ndarray:
    """Componentwise mean of accepted draws."""
    arr = np.asarray(accepted, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
    if arr.shape[0] == 0:
        raise ValueError("posterior mean of an empty sample")
    return arr.mean(axis=0)


def mcse_batch_means(chain, batches: int = 50) -> float:
    """Batch-means Monte Carlo standard error of the mean of a scalar chain.

    The chain is cut into ``batches`` consecutive batches of equal length
    (trailing draws that do not fill a batch are dropped).
    """
    x = np.asarray(chain, dtype=np.float64).reshape(-1)
    if batches < 2:
        raise ValueError("need at least two batches")
    if x.size < 2 * batches:
        raise ValueError(f"chain of length {x.size} is too short for {batches} batches")
    size = x.size // batches
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


def mcse_iid(sample) -> float:
    """Standard error of the mean for independent draws."""
    x = np.asarray(sample, dtype=np.float64).reshape(-1)
    if x.size < 2:
        raise ValueError("need at least two draws")
    return float(x.std(ddof=1) / math.sqrt(x.size))
