import math

import numpy as np
import pytest
from numba import njit
from scipy import stats

from bbabc.abc import (
    ABCProblem,
    MHConfig,
    ProposalKernel,
    abc_ar,
    abc_mh,
    mcse_batch_means,
    mcse_iid,
    mh_acceptance_probability,
    posterior_mean,
)
from bbabc.errors import ConfigError, DimensionError, ParameterError
from bbabc.model import BB5Params, BB8Params, sample_bb5, sample_bb8
from bbabc.numerics import substream
from bbabc.priors import NAMED_PRIORS, ModifiedUniform, PriorProduct
from bbabc.problems import bivariate_beta_problem

G1 = NAMED_PRIORS["G1"]


@njit(cache=True)
def _always_close(state, theta, ctx, aux, epsilon):
    return 0.0


def prior_only_problem(prior, epsilon=math.inf):
    """Problem whose simulated summary always matches: the posterior is the prior."""
    return ABCProblem(
        prior=prior,
        simulate=lambda stream, theta: None,
        summarize=lambda data: np.zeros(1),
        distance=lambda a, b: 0.0,
        observed_summary=np.zeros(1),
        epsilon=epsilon,
        kernel=ProposalKernel(_always_close, (0.0,)),
    )


@pytest.fixture(scope="module")
def a1_problem():
    data = sample_bb5(substream(7, 0), BB5Params((1, 1, 1, 1, 1)), 100)
    return bivariate_beta_problem(data, "bb5", PriorProduct.iid(G1, 5), 0.6)


@pytest.fixture(scope="module")
def a4_problem():
    data = sample_bb8(substream(7, 1), BB8Params((1, 1, 1, 1, 1, 1, 1, 1)), 60)
    return bivariate_beta_problem(data, "bb8", PriorProduct.iid(NAMED_PRIORS["G2"], 8), 1.2)


def with_epsilon(problem, epsilon):
    return ABCProblem(**{**problem.__dict__, "epsilon": epsilon})


class TestAcceptReject:
    def test_kernel_matches_python_route(self, a1_problem):
        a = abc_ar(a1_problem, 12, 10**6, substream(3, 0))
        b = abc_ar(a1_problem, 12, 10**6, substream(3, 0), use_kernel=False)
        assert np.array_equal(a.accepted, b.accepted)
        assert np.array_equal(a.indices, b.indices)
        assert np.array_equal(a.aux, b.aux)
        assert a.proposals_used == b.proposals_used

    def test_kernel_matches_python_route_bb8(self, a4_problem):
        a = abc_ar(a4_problem, 5, 10**6, substream(3, 5))
        b = abc_ar(a4_problem, 5, 10**6, substream(3, 5), use_kernel=False)
        assert np.array_equal(a.accepted, b.accepted)
        assert np.array_equal(a.distances, b.distances)

    @pytest.mark.parametrize("batch", [1, 7, 100, 5000])
    def test_batch_size_invariance(self, a1_problem, batch):
        ref = abc_ar(a1_problem, 20, 10**6, substream(4, 0))
        got = abc_ar(a1_problem, 20, 10**6, substream(4, 0), batch_size=batch)
        assert np.array_equal(ref.accepted, got.accepted)
        assert ref.proposals_used == got.proposals_used

    def test_deterministic(self, a1_problem):
        a = abc_ar(a1_problem, 30, 10**6, substream(5, 0))
        b = abc_ar(a1_problem, 30, 10**6, substream(5, 0))
        assert np.array_equal(a.accepted, b.accepted) and a.proposals_used == b.proposals_used

    def test_accepted_proposal_is_reproducible_alone(self, a1_problem):
        res = abc_ar(a1_problem, 3, 10**6, substream(6, 100))
        i = int(res.indices[-1])
        alone = abc_ar(a1_problem, 1, 1, substream(6, 100 + i))
        assert np.array_equal(alone.accepted[0], res.accepted[-1])

    def test_invariants(self, a1_problem):
        res = abc_ar(a1_problem, 25, 10**6, substream(8, 0))
        assert res.acceptances == len(res.accepted) == 25
        assert res.proposals_used >= res.acceptances
        assert res.indices[-1] == res.proposals_used - 1
        assert np.all(res.distances < 0.6)
        assert np.all(np.diff(res.indices) > 0)
        # aux rows are the simulated summaries; their distance is the recorded one
        obs = a1_problem.observed_summary
        np.testing.assert_allclose(np.abs(res.aux - obs).sum(axis=1), res.distances, rtol=1e-12)

    def test_infinite_tolerance_accepts_everything(self, a1_problem):
        res = abc_ar(with_epsilon(a1_problem, math.inf), 1000, 10**6, substream(9, 0))
        assert res.proposals_used == 1000 and not res.capped
        se = math.sqrt(G1.variance / 1000)
        assert np.all(np.abs(res.posterior_mean() - 1.3) < 4 * se)

    def test_zero_tolerance_hits_cap(self, a1_problem):
        res = abc_ar(with_epsilon(a1_problem, 0.0), 10, 3000, substream(10, 0))
        assert res.capped and res.acceptances == 0 and res.proposals_used == 3000
        assert res.accepted.shape == (0, 5)
        with pytest.raises(ValueError):
            res.posterior_mean()

    def test_cap_returns_partial_sample(self, a1_problem):
        res = abc_ar(a1_problem, 10**6, 2000, substream(11, 0))
        assert res.capped and res.proposals_used == 2000
        assert 0 < res.acceptances < 2000

    def test_accepted_sets_shrink_with_tolerance(self, a1_problem):
        wide = abc_ar(with_epsilon(a1_problem, 0.8), 10**6, 4000, substream(12, 0))
        narrow = abc_ar(with_epsilon(a1_problem, 0.5), 10**6, 4000, substream(12, 0))
        assert narrow.acceptances < wide.acceptances
        assert set(narrow.indices) <= set(wide.indices)

    def test_discrete_toy_posterior(self, stream):
        # theta in {0.25, 0.75} with equal prior mass: a modified uniform
        # with mu = 1 and p = 1/2 puts half its mass below 1
        def theta_of(u):
            return 0.25 if u[0] < 1.0 else 0.75

        def simulate(s, u):
            return int((s.uniform(5) < theta_of(u)).sum())

        problem = ABCProblem(
            prior=PriorProduct((ModifiedUniform(1.0, 0.5),)),
            simulate=simulate,
            summarize=lambda y: np.array([float(y)]),
            distance=lambda a, b: float(abs(a[0] - b[0])),
            observed_summary=np.array([3.0]),
            # integer sums: distance < 0.5 is an exact match
            epsilon=0.5,
        )
        res = abc_ar(problem, 10_000, 10**6, stream)
        freq = np.mean(res.accepted[:, 0] >= 1.0)
        like = {t: t**3 * (1 - t) ** 2 for t in (0.25, 0.75)}
        exact = like[0.75] / (like[0.25] + like[0.75])
        assert exact == pytest.approx(0.75)
        assert abs(freq - exact) < 4 * math.sqrt(exact * (1 - exact) / res.acceptances)

    @pytest.mark.parametrize("target, cap", [(0, 10), (5, 0)])
    def test_configuration_errors(self, a1_problem, target, cap):
        with pytest.raises(ConfigError):
            abc_ar(a1_problem, target, cap, substream(0, 0))


class TestProblemValidation:
    def test_negative_tolerance(self, a1_problem):
        with pytest.raises(ConfigError):
            with_epsilon(a1_problem, -0.1)

    def test_nan_tolerance(self, a1_problem):
        with pytest.raises(ConfigError):
            with_epsilon(a1_problem, math.nan)

    def test_non_finite_observed(self):
        with pytest.raises(ConfigError):
            ABCProblem(PriorProduct.iid(G1, 1), None, None, None, np.array([math.nan]), 1.0)

    def test_prior_dimension(self):
        data = sample_bb5(substream(0, 0), BB5Params((1, 1, 1, 1, 1)), 20)
        with pytest.raises(DimensionError):
            bivariate_beta_problem(data, "bb5", PriorProduct.iid(G1, 8), 0.6)

    def test_unknown_model(self):
        data = sample_bb5(substream(0, 0), BB5Params((1, 1, 1, 1, 1)), 20)
        with pytest.raises(ValueError):
            bivariate_beta_problem(data, "bb6", PriorProduct.iid(G1, 5), 0.6)


class TestMetropolisHastings:
    def test_kernel_matches_python_route(self, a1_problem):
        config = MHConfig((1.0,) * 5, (0.1,) * 5, 400)
        a = abc_mh(a1_problem, config, substream(13, 0))
        b = abc_mh(a1_problem, config, substream(13, 0), use_kernel=False)
        assert np.array_equal(a.chain, b.chain)
        assert (a.moves, a.simulations) == (b.moves, b.simulations)
        assert a.moves > 0

    def test_chain_moves_only_through_accepted_steps(self, a1_problem):
        res = abc_mh(a1_problem, MHConfig(None, (0.1,) * 5, 500), substream(14, 0))
        changed = np.any(res.chain[1:] != res.chain[:-1], axis=1)
        assert changed.sum() == res.moves
        assert res.simulations >= res.moves
        np.testing.assert_array_equal(res.chain[0], np.full(5, 1.3))

    def test_unchanged_when_indicator_fails(self, a1_problem):
        res = abc_mh(with_epsilon(a1_problem, 0.0), MHConfig((1.0,) * 5, (0.1,) * 5, 300), substream(15, 0))
        assert res.moves == 0 and res.simulations > 0
        assert np.all(res.chain == 1.0)

    def test_burn_in(self, a1_problem):
        res = abc_mh(a1_problem, MHConfig(None, (0.1,) * 5, 200, burn_in_fraction=0.25), substream(16, 0))
        assert res.burn_in == 50 and res.kept.shape == (150, 5)
        np.testing.assert_allclose(res.posterior_mean(), res.chain[50:].mean(axis=0))

    def test_targets_prior_when_tolerance_is_infinite(self, stream):
        res = abc_mh(prior_only_problem(PriorProduct((G1,))), MHConfig((1.3,), (1.0,), 400_000), stream)
        kept = res.kept[:, 0]
        se = mcse_batch_means(kept, 50)
        assert abs(kept.mean() - G1.mean) < 4 * se
        thinned = kept[::100]
        edges = stats.gamma(G1.shape, scale=G1.scale).ppf(np.linspace(0, 1, 21))
        counts = np.histogram(thinned, edges)[0]
        from conftest import chi_square_pvalue

        assert chi_square_pvalue(counts, np.full(20, thinned.size / 20)) > 0.01

    def test_support_violations_never_simulate(self):
        # start near zero with a wide step: many proposals go negative
        res = abc_mh(prior_only_problem(PriorProduct((G1,))), MHConfig((0.05,), (2.0,), 2000), substream(17, 0))
        assert res.simulations < 2000 - 1
        assert np.all(res.chain > 0)

    def test_initial_state_outside_support(self, a1_problem):
        with pytest.raises(ParameterError):
            abc_mh(a1_problem, MHConfig((1, 1, -1, 1, 1), (0.1,) * 5, 10), substream(0, 0))

    def test_dimension_mismatch(self, a1_problem):
        with pytest.raises(DimensionError):
            abc_mh(a1_problem, MHConfig(None, (0.1,) * 4, 10), substream(0, 0))
        with pytest.raises(DimensionError):
            MHConfig((1.0,) * 5, (0.1,) * 4, 10)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(proposal_sd=(0.0,)), dict(proposal_sd=(-1.0,)), dict(iterations=0), dict(iterations=2.5),
            dict(burn_in_fraction=1.0), dict(burn_in_fraction=-0.1),
        ],
    )
    def test_config_errors(self, kwargs):
        base = dict(initial_state=(1.0,), proposal_sd=(0.1,), iterations=10)
        with pytest.raises(ConfigError):
            MHConfig(**{**base, **kwargs})


class TestAcceptanceProbability:
    @pytest.mark.parametrize(
        "ratio, indicator, expected", [(2.0, True, 1.0), (0.3, True, 0.3), (2.0, False, 0.0), (0.0, True, 0.0)]
    )
    def test_values(self, ratio, indicator, expected):
        assert mh_acceptance_probability(ratio, indicator) == expected


class TestPosteriorMean:
    def test_example(self):
        np.testing.assert_array_equal(posterior_mean([(1, 2), (3, 4)]), [2, 3])

    def test_single(self):
        np.testing.assert_array_equal(posterior_mean([(0.5, 7.0, 1.0)]), [0.5, 7.0, 1.0])

    def test_permutation(self, stream):
        x = stream.uniform(300).reshape(100, 3)
        np.testing.assert_allclose(posterior_mean(x), posterior_mean(x[::-1]), rtol=1e-14)

    def test_empty(self):
        with pytest.raises(ValueError):
            posterior_mean(np.empty((0, 5)))


class TestMCSE:
    def test_constant(self):
        assert mcse_batch_means(np.full(1000, 2.5), 50) == 0.0

    def test_iid_normal(self, stream):
        x = stream.normal(10_000)
        se = mcse_batch_means(x, 100)
        assert 0.01 / 1.3 < se < 0.01 * 1.3

    def test_duplication_is_detected(self, stream):
        x = stream.normal(10_000)
        dup = np.repeat(x, 2)
        assert mcse_batch_means(dup, 100) == pytest.approx(mcse_batch_means(x, 100), rel=1e-12)
        assert mcse_iid(dup) < 0.75 * mcse_iid(x)

    def test_ar1_chain(self, stream):
        # AR(1) with phi = 0.9 and unit innovations: long-run variance 1 / (1 - phi)^2
        e = stream.normal(200_000)
        x = np.empty_like(e)
        x[0] = e[0] / math.sqrt(1 - 0.81)
        for i in range(1, x.size):
            x[i] = 0.9 * x[i - 1] + e[i]
        truth = 1 / (1 - 0.9) / math.sqrt(x.size)
        assert mcse_batch_means(x, 50) == pytest.approx(truth, rel=0.3)

    def test_too_short(self):
        with pytest.raises(ValueError):
            mcse_batch_means(np.ones(99), 50)
        with pytest.raises(ValueError):
            mcse_batch_means(np.ones(100), 1)
        with pytest.raises(ValueError):
            mcse_iid([1.0])

    def test_iid(self):
        assert mcse_iid([1.0, 2.0, 3.0, 4.0]) == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
