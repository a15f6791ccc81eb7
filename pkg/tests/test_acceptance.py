"""End-to-end acceptance checks, one test per criterion.

Each test reports a PASS/FAIL line through ``report_criterion``; the lines are
collected in the "acceptance criteria" section of the pytest summary.
"""

import hashlib
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from bbabc.abc import ABCProblem, MHConfig, abc_ar, abc_mh, mcse_batch_means
from bbabc.betabinom import (
    BACON_EGGS_PRIOR,
    TRANSPOSED_PRIOR,
    bundled_table,
    run_bacon_eggs,
)
from bbabc.estimation import MarginalMLEs, beta_binomial_mle, mmle5_from_marginals
from bbabc.model import (
    BB5Params,
    BB8Params,
    marginal_params,
    mc_correlation,
    sample_bb5,
    sample_bb8,
    theoretical_cross_moment,
)
from bbabc.numerics import substream
from bbabc.priors import NAMED_PRIORS, ModifiedUniform, PriorProduct, sample_product_into
from bbabc.study import SETTINGS, parse_config, run_sim_study
from conftest import chi_square_pvalue

pytestmark = pytest.mark.slow


def _fmt(values, digits=4):
    return "(" + ", ".join(f"{v:.{digits}f}" for v in values) + ")"


def _prior_draws(stream, prior, n):
    product = PriorProduct((prior,))
    kinds, first, second = product.encoded()
    out = np.empty((n, 1))
    for i in range(n):
        sample_product_into(stream.state, kinds, first, second, out[i])
    return out[:, 0]


def test_criterion_1_marginal_mles(report_criterion):
    table = bundled_table("bacon_eggs")
    start = time.perf_counter()
    bacon = beta_binomial_mle(table.bacon_totals, 4)
    eggs = beta_binomial_mle(table.eggs_totals, 4)
    flipped = beta_binomial_mle(table.eggs_totals[::-1], 4)
    elapsed = time.perf_counter() - start
    ok = (
        np.allclose(bacon, (0.3571, 4.4552), atol=1e-3)
        and np.allclose(eggs, (0.8592, 3.9593), atol=1e-3)
        and np.allclose(flipped, (3.9593, 0.8592), atol=1e-3)
        and elapsed < 1.0
    )
    report_criterion(
        "1 beta-binomial marginal MLEs", ok,
        f"bacon={_fmt(bacon)} eggs={_fmt(eggs)} transposed eggs={_fmt(flipped)} time={elapsed:.3f}s",
    )


def test_criterion_2_mmle_exactness(report_criterion):
    res = mmle5_from_marginals(MarginalMLEs(2, 2, 2, 2), 3.25)
    err = float(np.max(np.abs(np.array(res.alpha_hat) - 1.0)))
    report_criterion("2 MMLE exactness", err <= 1e-9, f"alpha_hat={_fmt(res.alpha_hat, 12)} max error={err:.1e}")


def test_criterion_3_prior_moments(report_criterion):
    n = 10**6
    targets = {"G1": (1.3, 0.676), "U1": (1.3, 0.676), "G2": (2.6, 2.704), "U2": (2.6, 2.704)}
    ok, parts = True, []
    for i, (name, (mean, var)) in enumerate(targets.items()):
        x = _prior_draws(substream(303, i), NAMED_PRIORS[name], n)
        m, v = x.mean(), x.var(ddof=1)
        se_m = math.sqrt(v / n)
        se_v = math.sqrt((np.mean((x - m) ** 4) - v**2) / n)
        good = abs(m - mean) < 4 * se_m and abs(v - var) < 4 * se_v
        ok &= good
        parts.append(f"{name}: mean={m:.4f} (z={(m - mean) / se_m:+.2f}) var={v:.4f} (z={(v - var) / se_v:+.2f})")
    report_criterion("3 prior moment matching", ok, "; ".join(parts))


def test_criterion_4_prior_mean_correlations(report_criterion):
    r_pos = mc_correlation(substream(404, 0), BB5Params(BACON_EGGS_PRIOR.prior_means), 10**6)
    r_neg = mc_correlation(substream(404, 1), BB5Params(TRANSPOSED_PRIOR.prior_means), 10**6)
    ok = abs(r_pos - 0.3004) <= 0.01 and abs(r_neg + 0.3002) <= 0.01
    report_criterion("4 correlations at the prior means", ok, f"r={r_pos:.4f} (0.3004), r={r_neg:.4f} (-0.3002)")


def test_criterion_5_purchase_table_ar(report_criterion):
    start = time.perf_counter()
    res = run_bacon_eggs("ar", bundled_table("bacon_eggs"), BACON_EGGS_PRIOR, 100.0, substream(0, 0),
                         acceptances=500)
    elapsed = time.perf_counter() - start
    a1, a2, a5, ab = (res.summary[k][0] for k in ("alpha_1", "alpha_2", "alpha_5", "alpha_b"))
    proposals = res.engine.proposals_used
    ok = (
        res.engine.acceptances == 500
        and abs(a1 - 0.344) <= 0.05
        and abs(a2 - 0.876) <= 0.05
        and abs(a5 - 4.41) <= 0.3
        and abs(ab - 0.349) <= 0.05
        and 399_879 / 2 <= proposals <= 2 * 399_879
    )
    report_criterion(
        "5 purchase-table ABC-AR", ok,
        f"alpha_1={a1:.4f} alpha_2={a2:.4f} alpha_5={a5:.3f} alpha_b={ab:.4f} "
        f"proposals={proposals:,} r={res.r:.4f} time={elapsed:.0f}s",
    )


def test_criterion_6_transposed_table_ar(report_criterion):
    res = run_bacon_eggs("ar", bundled_table("bacon_eggs_transposed"), TRANSPOSED_PRIOR, 100.0, substream(0, 0),
                         acceptances=500)
    reference = np.array([0.125, 1.83, 0.171, 2.76, 0.753])
    means = res.summary.means[:5]
    gaps = np.abs(means - reference)
    ok = res.engine.acceptances == 500 and np.all(gaps <= 0.1) and abs(res.r + 0.246) <= 0.02
    report_criterion(
        "6 transposed-table ABC-AR", ok,
        f"means={_fmt(means, 3)} max gap={gaps.max():.3f} r={res.r:.4f} proposals={res.engine.proposals_used:,}",
    )


def test_criterion_7_scaled_study(report_criterion):
    a1 = run_sim_study(parse_config("truth=A1 prior=G1 eps=0.6 n=100 datasets=20"))
    a2 = run_sim_study(parse_config("truth=A2 prior=G1 eps=0.6 n=100 datasets=20"))
    a1_reference = np.array([0.313, 0.314, 0.329, 0.332, 0.338])
    bias1, bias2 = a1.bias("ABC"), a2.bias("ABC")
    ok = (
        a1.used("ABC") == 20
        and a2.used("ABC") == 20
        and np.all(np.abs(bias1 - a1_reference) <= 0.15)
        and 13_603 / 2 <= a1.proposals_mean <= 2 * 13_603
        and abs(bias2[0] + 1.111) <= 0.3
    )
    report_criterion(
        "7 scaled simulation study", ok,
        f"A1 bias={_fmt(bias1, 3)} A1 alpha_1 mse={a1.mse('ABC')[0]:.3f} "
        f"A1 proposals={a1.proposals_mean:,.0f} A2 alpha_1 bias={bias2[0]:.3f}",
    )


def test_criterion_8a_discrete_toy(report_criterion):
    # two-point parameter with equal prior mass and five Bernoulli trials
    def simulate(s, u):
        return int((s.uniform(5) < (0.25 if u[0] < 1.0 else 0.75)).sum())

    problem = ABCProblem(
        prior=PriorProduct((ModifiedUniform(1.0, 0.5),)),
        simulate=simulate,
        summarize=lambda y: np.array([float(y)]),
        distance=lambda a, b: float(abs(a[0] - b[0])),
        observed_summary=np.array([3.0]),
        epsilon=0.5,
    )
    res = abc_ar(problem, 10_000, 10**6, substream(808, 0))
    like = {t: t**3 * (1 - t) ** 2 for t in (0.25, 0.75)}
    exact = like[0.75] / (like[0.25] + like[0.75])
    freq = float(np.mean(res.accepted[:, 0] >= 1.0))
    se = math.sqrt(exact * (1 - exact) / res.acceptances)
    report_criterion("8a discrete-toy posterior", abs(freq - exact) < 4 * se,
                     f"P(theta=0.75)={freq:.4f} exact={exact:.4f} se={se:.4f}")


def test_criterion_8b_mh_targets_prior(report_criterion):
    from test_abc import prior_only_problem

    g1 = NAMED_PRIORS["G1"]
    res = abc_mh(prior_only_problem(PriorProduct((g1,))), MHConfig((1.3,), (1.0,), 400_000), substream(809, 0))
    kept = res.kept[:, 0]
    thinned = kept[::100]
    edges = stats.gamma(g1.shape, scale=g1.scale).ppf(np.linspace(0, 1, 21))
    p = chi_square_pvalue(np.histogram(thinned, edges)[0], np.full(20, thinned.size / 20))
    se = mcse_batch_means(kept, 50)
    ok = p > 0.01 and abs(kept.mean() - g1.mean) < 4 * se
    report_criterion("8b ABC-MH with infinite tolerance targets the prior", ok,
                     f"chi-square p={p:.3f} mean={kept.mean():.4f} mcse={se:.4f}")


def test_criterion_8c_marginal_ks(report_criterion):
    pvalues = {}
    for i, name in enumerate(["A1", "A2", "A3", "A4", "A5"]):
        truth = SETTINGS[name]
        params = BB5Params(truth) if len(truth) == 5 else BB8Params(truth)
        draw = sample_bb5 if len(truth) == 5 else sample_bb8
        d = draw(substream(810, i), params, 20_000)
        for j, (z, (a, b)) in enumerate(zip((d.z1, d.z2), marginal_params(params)), start=1):
            pvalues[f"{name}.z{j}"] = stats.kstest(z, stats.beta(a, b).cdf).pvalue
    ok = min(pvalues.values()) > 0.01
    report_criterion("8c marginal KS tests", ok, " ".join(f"{k}={v:.3f}" for k, v in pvalues.items()))


def test_criterion_8d_cross_moment(report_criterion):
    # BB8 settings have no closed form here. The ratio's variance is finite only
    # when both first shapes exceed 2 (A2, A3); at A1 they equal 2, so the SE is nominal
    parts, ok = [], True
    for i, name in enumerate(["A1", "A2", "A3"]):
        p = BB5Params(SETTINGS[name])
        d = sample_bb5(substream(811, i), p, 10**6)
        ratio = (1 - d.z1) * (1 - d.z2) / (d.z1 * d.z2)
        se = ratio.std(ddof=1) / math.sqrt(d.n)
        exact = theoretical_cross_moment(p)
        ok &= abs(ratio.mean() - exact) < 4 * se
        parts.append(f"{name}: mc={ratio.mean():.4f} exact={exact:.4f} se={se:.4f}")
    report_criterion("8d theoretical cross moment vs Monte Carlo", ok, "; ".join(parts))


_RERUN_SCRIPT = """
import hashlib, sys
import numpy as np
from bbabc.abc import MHConfig, abc_ar, abc_mh, set_workers
from bbabc.model import BB5Params, sample_bb5
from bbabc.numerics import substream
from bbabc.priors import NAMED_PRIORS, PriorProduct
from bbabc.problems import bivariate_beta_problem
from bbabc.study import parse_config, run_sim_study

set_workers(int(sys.argv[1]))
h = hashlib.sha256()
data = sample_bb5(substream(5, 0), BB5Params((1, 1, 1, 1, 1)), 100)
problem = bivariate_beta_problem(data, "bb5", PriorProduct.iid(NAMED_PRIORS["G1"], 5), 0.6)
ar = abc_ar(problem, 300, 10**6, substream(5, 1))
h.update(ar.accepted.tobytes()); h.update(np.asarray(ar.indices).tobytes())
mh = abc_mh(problem, MHConfig((1, 1, 1, 1, 1), (0.2,) * 5, 3000), substream(5, 2))
h.update(mh.chain.tobytes())
study = run_sim_study(parse_config("truth=A2 eps=0.6 datasets=2 acceptances=50 seed=5"))
h.update(study.abc_estimates.tobytes()); h.update(study.proposals.tobytes())
print(h.hexdigest())
"""


def test_criterion_8e_bit_identical_reruns(report_criterion):
    digests = {}
    for workers in (1, 4):
        env = {**os.environ, "NUMBA_NUM_THREADS": str(workers)}
        out = subprocess.run([sys.executable, "-c", _RERUN_SCRIPT, str(workers)], env=env,
                             capture_output=True, text=True, check=True, timeout=900)
        digests[workers] = out.stdout.strip()
    repeat = subprocess.run([sys.executable, "-c", _RERUN_SCRIPT, "4"],
                            env={**os.environ, "NUMBA_NUM_THREADS": "4"},
                            capture_output=True, text=True, check=True, timeout=900).stdout.strip()
    ok = len(set(digests.values())) == 1 and repeat == digests[4] and len(repeat) == 64
    report_criterion("8e bit-identical reruns across worker counts", ok,
                     " ".join(f"workers={k}:{v[:16]}" for k, v in digests.items()))
