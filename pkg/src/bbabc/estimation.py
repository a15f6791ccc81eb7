"""Marginal beta and beta-binomial maximum likelihood, and the MMLE.

The MMLE combines the four marginal beta MLEs with one moment equation in
``alpha_5``::

    alpha_5^2 + B alpha_5 + C = 0
    B = b c + a c + a d - b - d
    C = (a - 1)(c - 1) b d - a c (a - 1)(c - 1) S

where ``S`` is the sample mean of (1 - z1)(1 - z2) / (z1 z2).  The larger
root is floored at 0 and the remaining parameters follow by subtraction,
each floored at 0 in a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import ConvergenceError, DegenerateDataError, ParameterError, PoleError
from .model import BivariateDataset
from .numerics.special import _digamma, _log_beta, _log_gamma, _trigamma
from .summaries import legacy_moment_stat

__all__ = [
    "MarginalMLEs",
    "MMLEResult",
    "beta_mle",
    "beta_mle_from_stats",
    "beta_score",
    "beta_binomial_mle",
    "beta_binomial_loglik",
    "mmle5",
    "mmle5_from_marginals",
]

MAX_NEWTON_STEPS = 100


@dataclass(frozen=True)
class MarginalMLEs:
    a_hat: float
    b_hat: float
    c_hat: float
    d_hat: float

    def __post_init__(self):
        for v in (self.a_hat, self.b_hat, self.c_hat, self.d_hat):
            if not (v > 0 and math.isfinite(v)):
                raise ParameterError(f"marginal MLEs must be positive and finite, got {self}")


@dataclass(frozen=True)
class MMLEResult:
    alpha_hat: tuple[float, ...]
    quadratic_B: float
    quadratic_C: float
    clipped: tuple[bool, ...]
    complex_root: bool
    marginals: MarginalMLEs
    moment_stat: float


def beta_score(a, b, mean_log, mean_log1m):
    """Per-observation score of the Beta(a, b) log-likelihood."""
    common = _digamma(a + b)
    return mean_log - _digamma(a) + common, mean_log1m - _digamma(b) + common


def _beta_loglik(a, b, mean_log, mean_log1m):
    return (a - 1.0) * mean_log + (b - 1.0) * mean_log1m - _log_beta(a, b)


def beta_mle_from_stats(mean_log: float, mean_log1m: float, start=None, tol: float = 1e-12):
    """Beta MLE from the sufficient statistics (mean log z, mean log(1 - z)).

    Newton's method with the trigamma Hessian; the step is halved whenever it
    would leave the positive quadrant or lower the likelihood.
    """
    if not (mean_log < 0 and mean_log1m < 0):
        raise DegenerateDataError("sufficient statistics must both be negative")
    if start is None:
        # geometric-mean approximation
        g1, g2 = math.exp(mean_log), math.exp(mean_log1m)
        denom = max(1.0 - g1 - g2, 1e-8)
        start = (0.5 + 0.5 * g1 / denom, 0.5 + 0.5 * g2 / denom)
    a, b = float(start[0]), float(start[1])
    ll = _beta_loglik(a, b, mean_log, mean_log1m)
    for _ in range(MAX_NEWTON_STEPS):
        g1, g2 = beta_score(a, b, mean_log, mean_log1m)
        if max(abs(g1), abs(g2)) <= tol:
            return a, b
        t = _trigamma(a + b)
        h11 = t - _trigamma(a)
        h22 = t - _trigamma(b)
        det = h11 * h22 - t * t
        step_a = -(h22 * g1 - t * g2) / det
        step_b = -(h11 * g2 - t * g1) / det
        gmax = max(abs(g1), abs(g2))
        scale = 1.0
        while True:
            na, nb = a + scale * step_a, b + scale * step_b
            if na > 0 and nb > 0:
                nll = _beta_loglik(na, nb, mean_log, mean_log1m)
                if nll >= ll - 1e-15 * abs(ll):
                    break
                # close to the optimum the likelihood change is below rounding
                # noise; a smaller score is then the reliable progress signal
                ng1, ng2 = beta_score(na, nb, mean_log, mean_log1m)
                if max(abs(ng1), abs(ng2)) < 0.5 * gmax:
                    break
            scale *= 0.5
            if scale < 1e-30:
                raise ConvergenceError("beta MLE line search stalled")
        a, b, ll = na, nb, nll
    g1, g2 = beta_score(a, b, mean_log, mean_log1m)
    if max(abs(g1), abs(g2)) <= max(tol, 1e-9):
        return a, b
    raise ConvergenceError(f"beta MLE did not converge in {MAX_NEWTON_STEPS} steps")


def beta_mle(values) -> tuple[float, float]:
    """Maximum likelihood (a, b) for i.i.d. Beta(a, b) data, started at the moment estimates."""
    z = np.asarray(values, dtype=np.float64).reshape(-1)
    if z.size < 2:
        raise DegenerateDataError("beta MLE needs at least two observations")
    if not np.all((z > 0) & (z < 1)):
        raise ParameterError("beta data must lie strictly inside (0, 1)")
    if np.ptp(z) == 0.0:
        raise DegenerateDataError("beta MLE is undefined for constant data")
    m = z.mean()
    v = z.var()
    common = m * (1.0 - m) / v - 1.0
    start = (m * common, (1.0 - m) * common) if common > 0 else None
    return beta_mle_from_stats(float(np.log(z).mean()), float(np.log1p(-z).mean()), start)


def _histogram(counts, trials):
    counts = np.asarray(counts, dtype=np.float64).reshape(-1)
    if trials is None:
        trials = counts.size - 1
    if counts.size != trials + 1:
        raise ParameterError(f"need {trials + 1} histogram bins for {trials} trials, got {counts.size}")
    if np.any(counts < 0):
        raise ParameterError("histogram counts must be nonnegative")
    if np.count_nonzero(counts) < 2:
        raise DegenerateDataError("beta-binomial MLE needs at least two distinct observed counts")
    return counts, int(trials)


def beta_binomial_loglik(a: float, b: float, counts, trials: int | None = None) -> float:
    """Sum over k of counts[k] * log BetaBinomial(k; trials, a, b)."""
    counts, trials = _histogram(counts, trials)
    if not (a > 0 and b > 0):
        return -math.inf
    total = 0.0
    lb = _log_beta(a, b)
    for k, n_k in enumerate(counts):
        if n_k:
            log_choose = _log_gamma(trials + 1.0) - _log_gamma(k + 1.0) - _log_gamma(trials - k + 1.0)
            total += n_k * (log_choose + _log_beta(k + a, trials - k + b) - lb)
    return total


def _bb_derivatives(a, b, counts, trials):
    n = counts.sum()
    ga = n * (_digamma(a + b) - _digamma(a))
    gb = n * (_digamma(a + b) - _digamma(b))
    haa = n * (_trigamma(a + b) - _trigamma(a))
    hbb = n * (_trigamma(a + b) - _trigamma(b))
    hab = n * _trigamma(a + b)
    for k, n_k in enumerate(counts):
        if not n_k:
            continue
        d_all = _digamma(trials + a + b)
        t_all = _trigamma(trials + a + b)
        ga += n_k * (_digamma(k + a) - d_all)
        gb += n_k * (_digamma(trials - k + b) - d_all)
        haa += n_k * (_trigamma(k + a) - t_all)
        hbb += n_k * (_trigamma(trials - k + b) - t_all)
        hab -= n_k * t_all
    return np.array([ga, gb]), np.array([[haa, hab], [hab, hbb]])


def _bb_moment_start(counts, trials):
    k = np.arange(trials + 1)
    n = counts.sum()
    mean = (counts * k).sum() / n
    var = (counts * (k - mean) ** 2).sum() / n
    p = mean / trials
    rho = 0.5
    if 0 < p < 1 and trials > 1:
        guess = (var / (trials * p * (1 - p)) - 1.0) / (trials - 1.0)
        if 0 < guess < 1:
            rho = guess
    total = 1.0 / rho - 1.0
    return np.array([max(p, 1e-3) * total, max(1 - p, 1e-3) * total])


def _bb_newton(x, counts, trials, gtol):
    ll = beta_binomial_loglik(x[0], x[1], counts, trials)
    for _ in range(MAX_NEWTON_STEPS):
        grad, hess = _bb_derivatives(x[0], x[1], counts, trials)
        if np.max(np.abs(grad)) <= gtol:
            return x
        try:
            eig = np.linalg.eigvalsh(hess)
            step = -np.linalg.solve(hess, grad) if eig.max() < 0 else None
        except np.linalg.LinAlgError:
            step = None
        if step is None:
            # not locally concave: steepest ascent, scaled to the current point
            step = grad * (0.1 * np.min(x) / np.max(np.abs(grad)))
        gmax = np.max(np.abs(grad))
        scale = 1.0
        while True:
            trial = x + scale * step
            if np.all(trial > 0):
                new_ll = beta_binomial_loglik(trial[0], trial[1], counts, trials)
                if new_ll >= ll - 1e-13 * abs(ll):
                    break
                if np.max(np.abs(_bb_derivatives(trial[0], trial[1], counts, trials)[0])) < 0.5 * gmax:
                    break
            scale *= 0.5
            if scale < 1e-20:
                return None
        x, ll = trial, new_ll
    return None


def _check_finite_maximiser(counts, trials):
    """Reject histograms whose likelihood supremum sits on the boundary.

    With p = a / (a + b) and t = 1 / (a + b), the log-likelihood slope in t
    at t = 0 (the binomial limit, p at its binomial MLE) is
    sum_k n_k [k(k-1) / (2p) + (T-k)(T-k-1) / (2(1-p)) - T(T-1) / 2].
    A nonpositive slope means no overdispersion to fit.  When every count
    is 0 or T the likelihood instead keeps rising as a, b -> 0.
    """
    k = np.arange(trials + 1)
    if counts[1:trials].sum() == 0:
        raise DegenerateDataError("all counts are 0 or the maximum; the likelihood has no finite maximiser")
    p = (counts * k).sum() / (counts.sum() * trials)
    slope = (counts * (k * (k - 1) / (2 * p) + (trials - k) * (trials - k - 1) / (2 * (1 - p))
                       - trials * (trials - 1) / 2)).sum()
    if slope <= 0:
        raise DegenerateDataError("counts are not overdispersed; the likelihood peaks in the binomial limit")


def beta_binomial_mle(counts, trials: int | None = None, gtol: float = 1e-8) -> tuple[float, float]:
    """Maximum likelihood (a, b) of a beta-binomial from a histogram of counts.

    ``counts[k]`` is the number of units with ``k`` successes out of
    ``trials``.  Newton ascent from moment estimates, falling back to a
    Nelder-Mead search on the log scale followed by Newton polishing.
    """
    counts, trials = _histogram(counts, trials)
    _check_finite_maximiser(counts, trials)
    x = _bb_newton(_bb_moment_start(counts, trials), counts, trials, gtol)
    if x is None:
        res = optimize.minimize(
            lambda t: -beta_binomial_loglik(math.exp(t[0]), math.exp(t[1]), counts, trials),
            np.log(_bb_moment_start(counts, trials)),
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000},
        )
        x = _bb_newton(np.exp(res.x), counts, trials, gtol)
        if x is None:
            raise ConvergenceError("beta-binomial MLE did not converge")
    return float(x[0]), float(x[1])


def mmle5_from_marginals(marginals: MarginalMLEs, moment_stat: float) -> MMLEResult:
    """Solve the moment quadratic for alpha_5 and back out alpha_1..alpha_4."""
    a, b, c, d = marginals.a_hat, marginals.b_hat, marginals.c_hat, marginals.d_hat
    if a <= 1.0 or c <= 1.0:
        raise PoleError(f"MMLE needs a_hat > 1 and c_hat > 1 (got {a:.6g}, {c:.6g})")
    B = b * c + a * c + a * d - b - d
    C = (a - 1.0) * (c - 1.0) * b * d - a * c * (a - 1.0) * (c - 1.0) * moment_stat
    disc = B * B - 4.0 * C
    complex_root = disc < 0.0
    raw5 = -math.inf if complex_root else (-B + math.sqrt(disc)) / 2.0
    a5 = max(0.0, raw5)
    raw4 = b - a5
    a4 = max(0.0, raw4)
    raw3 = d - a5
    a3 = max(0.0, raw3)
    raw2 = c - a4
    a2 = max(0.0, raw2)
    raw1 = a - a3
    a1 = max(0.0, raw1)
    clipped = tuple(r < 0.0 for r in (raw1, raw2, raw3, raw4, raw5))
    return MMLEResult(
        alpha_hat=(a1, a2, a3, a4, a5),
        quadratic_B=B,
        quadratic_C=C,
        clipped=clipped,
        complex_root=complex_root,
        marginals=marginals,
        moment_stat=float(moment_stat),
    )


def mmle5(data: BivariateDataset) -> MMLEResult:
    """Modified maximum likelihood estimate of (alpha_1, ..., alpha_5)."""
    if not isinstance(data, BivariateDataset):
        data = BivariateDataset(np.asarray(data))
    a, b = beta_mle(data.z1)
    c, d = beta_mle(data.z2)
    return mmle5_from_marginals(MarginalMLEs(a, b, c, d), legacy_moment_stat(data))
