"""Repeated-dataset simulation studies of ABC and MMLE estimators.

Stream layout for a study with master seed ``s``: dataset ``j`` is drawn from
``substream(s, j)`` and its ABC proposals use ``substream(s, (j + 1) * 2**32 + i)``
for proposal ``i``.  A dataset whose summaries are undefined (a constant
coordinate) is discarded and redrawn from the continuation of stream ``j``.
"""

from __future__ import annotations

import csv
import logging
import math
import re
import shlex
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .abc import abc_ar
from .errors import ConfigError, ConvergenceError, DegenerateDataError, PoleError
from .estimation import mmle5
from .model import BB5Params, BB8Params, sample_bb5, sample_bb8
from .numerics.rng import substream
from .priors import NAMED_PRIORS, PriorProduct, parse_prior
from .problems import bivariate_beta_problem
from .summaries import summaries5

__all__ = [
    "SETTINGS",
    "StudyConfig",
    "StudyReport",
    "parse_config",
    "parse_truth",
    "run_sim_study",
    "emit_report",
    "load_report",
]

log = logging.getLogger(__name__)

SETTINGS: dict[str, tuple[float, ...]] = {
    "A1": (1.0, 1.0, 1.0, 1.0, 1.0),
    "A2": (3.0, 2.5, 2.0, 1.5, 1.0),
    "A3": (1.0, 1.0, 2.0, 6.0, 1.0),
    "A4": (2.0, 1.0, 1.0, 2.0, 4.0, 6.0, 2.0, 1.0),
    "A5": (3.5, 2.0, 1.5, 4.0, 1.0, 2.5, 3.0, 4.5),
}

DATASET_STRIDE = 1 << 32


def parse_truth(text: str) -> tuple[float, ...]:
    """A named setting (``A1``..``A5``) or a comma-separated list of shapes."""
    key = text.strip().upper()
    if key in SETTINGS:
        return SETTINGS[key]
    try:
        values = tuple(float(v) for v in re.split(r"[,\s]+", text.strip().strip("()")) if v)
    except ValueError as exc:
        raise ConfigError(f"truth must be one of {sorted(SETTINGS)} or a list of numbers, got {text!r}") from exc
    if not values:
        raise ConfigError("empty truth vector")
    return values


def _parse_eps(text) -> float:
    if isinstance(text, str) and text.strip().lower() in ("inf", "infinity"):
        return math.inf
    try:
        value = float(text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"eps must be a number or 'inf', got {text!r}") from exc
    if not value > 0:
        raise ConfigError(f"eps must be positive, got {value}")
    return value


def _parse_count(name, text) -> int:
    try:
        value = float(text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a positive integer, got {text!r}") from exc
    if value != int(value) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {text!r}")
    return int(value)


def _parse_bool(name, text) -> bool:
    if isinstance(text, bool):
        return text
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{name} must be a boolean, got {text!r}")


@dataclass(frozen=True)
class StudyConfig:
    model: str
    truth: tuple[float, ...]
    prior: str = "G1"
    n: int = 100
    epsilon: float = 0.6
    datasets: int = 200
    target_acceptances: int = 1000
    proposal_cap: int = 15_000_000
    master_seed: int = 0
    raw_spearman: bool = False

    def __post_init__(self):
        if self.model not in ("bb5", "bb8"):
            raise ConfigError(f"model must be bb5 or bb8, got {self.model!r}")
        truth = tuple(float(v) for v in self.truth)
        object.__setattr__(self, "truth", truth)
        k = self.dim
        if len(truth) != k:
            raise ConfigError(f"{self.model} needs a {k}-component truth, got {len(truth)}")
        try:
            (BB5Params if k == 5 else BB8Params)(truth)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        parse_prior(self.prior)
        for name in ("n", "datasets", "target_acceptances", "proposal_cap"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.n < 2:
            raise ConfigError("n must be at least 2 for the correlation summaries")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon!r}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("seed must lie in [0, 2**64)")

    @property
    def dim(self) -> int:
        return 5 if self.model == "bb5" else 8

    def prior_product(self) -> PriorProduct:
        return PriorProduct.iid(parse_prior(self.prior), self.dim)

    def to_text(self) -> str:
        truth = ",".join(repr(v) for v in self.truth)
        return "\n".join(
            [
                f"model={self.model}",
                f"truth={truth}",
                f"prior={self.prior}",
                f"n={self.n}",
                f"eps={self.epsilon!r}",
                f"datasets={self.datasets}",
                f"acceptances={self.target_acceptances}",
                f"cap={self.proposal_cap}",
                f"seed={self.master_seed}",
                f"raw_spearman={self.raw_spearman}",
            ]
        ) + "\n"


_ALIASES = {
    "eps": "epsilon",
    "epsilon": "epsilon",
    "acceptances": "target_acceptances",
    "target_acceptances": "target_acceptances",
    "cap": "proposal_cap",
    "proposal_cap": "proposal_cap",
    "seed": "master_seed",
    "master_seed": "master_seed",
    "model": "model",
    "truth": "truth",
    "prior": "prior",
    "n": "n",
    "datasets": "datasets",
    "raw_spearman": "raw_spearman",
}


def _tokens(text: str):
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        yield from shlex.split(line)


def parse_config(
    source: str | Path | None = None,
    overrides: Mapping[str, object] | None = None,
) -> StudyConfig:
    """Build a :class:`StudyConfig` from ``key=value`` text and flag overrides.

    ``source`` is a path to a config file or the text itself; tokens are
    separated by whitespace or newlines and ``#`` starts a comment.
    ``overrides`` (e.g. parsed CLI flags; ``None`` values are ignored) take
    precedence.  Without ``model`` the model follows from the truth length.
    """
    raw: dict[str, object] = {}
    if source is not None:
        if isinstance(source, Path) or ("=" not in source and Path(source).is_file()):
            text = Path(source).read_text(encoding="utf-8")
        else:
            text = source
        for token in _tokens(text):
            if "=" not in token:
                raise ConfigError(f"expected key=value, got {token!r}")
            key, value = token.split("=", 1)
            raw[key.strip().lower()] = value.strip()
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key.lower()] = value

    values: dict[str, object] = {}
    for key, value in raw.items():
        if key not in _ALIASES:
            raise ConfigError(f"unknown configuration key {key!r}")
        values[_ALIASES[key]] = value

    if "truth" not in values:
        raise ConfigError("truth is required (A1..A5 or a comma-separated vector)")
    truth = values["truth"]
    values["truth"] = parse_truth(truth) if isinstance(truth, str) else tuple(float(v) for v in truth)
    if "model" not in values:
        values["model"] = {5: "bb5", 8: "bb8"}.get(len(values["truth"]))
        if values["model"] is None:
            raise ConfigError(f"cannot infer the model from a {len(values['truth'])}-component truth")
    values["model"] = str(values["model"]).lower()
    if "prior" in values:
        prior = str(values["prior"]).strip()
        values["prior"] = prior.upper() if prior.upper() in NAMED_PRIORS else prior
    if "epsilon" in values:
        values["epsilon"] = _parse_eps(values["epsilon"])
    for name in ("n", "datasets", "target_acceptances", "proposal_cap"):
        if name in values:
            values[name] = _parse_count(name, values[name])
    if "master_seed" in values:
        try:
            values["master_seed"] = int(values["master_seed"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"seed must be an integer, got {values['master_seed']!r}") from exc
    if "raw_spearman" in values:
        values["raw_spearman"] = _parse_bool("raw_spearman", values["raw_spearman"])
    return StudyConfig(**values)


@dataclass
class StudyReport:
    """Per-dataset estimates and run statistics of a study.

    Rows of ``abc_estimates`` / ``mmle_estimates`` are NaN where the estimate
    failed (no acceptances within the cap, or an MMLE pole / degenerate fit).
    """

    config: StudyConfig
    abc_estimates: np.ndarray
    proposals: np.ndarray
    acceptances: np.ndarray
    capped: np.ndarray
    wall_times: np.ndarray = field(repr=False)
    mmle_estimates: np.ndarray | None = None
    failures: list[str] = field(default_factory=list, repr=False)

    @property
    def truth(self) -> np.ndarray:
        return np.asarray(self.config.truth)

    def methods(self) -> dict[str, np.ndarray]:
        out = {"ABC": self.abc_estimates}
        if self.mmle_estimates is not None:
            out["MMLE"] = self.mmle_estimates
        return out

    def _ok(self, estimates):
        return estimates[~np.isnan(estimates).any(axis=1)]

    def bias(self, method: str = "ABC") -> np.ndarray:
        """Mean of estimate - truth over datasets with an estimate."""
        est = self._ok(self.methods()[method])
        return (est - self.truth).mean(axis=0) if est.size else np.full(self.truth.size, np.nan)

    def mse(self, method: str = "ABC") -> np.ndarray:
        est = self._ok(self.methods()[method])
        return ((est - self.truth) ** 2).mean(axis=0) if est.size else np.full(self.truth.size, np.nan)

    def used(self, method: str = "ABC") -> int:
        return int(self._ok(self.methods()[method]).shape[0])

    @property
    def proposals_mean(self) -> float:
        return float(self.proposals.mean())

    @property
    def proposals_sd(self) -> float:
        return float(self.proposals.std(ddof=1)) if self.proposals.size > 1 else 0.0

    @property
    def capped_runs(self) -> int:
        return int(self.capped.sum())


def _observed_dataset(config: StudyConfig, j: int):
    stream = substream(config.master_seed, j)
    params = (BB5Params if config.dim == 5 else BB8Params)(config.truth)
    sampler = sample_bb5 if config.dim == 5 else sample_bb8
    for attempt in range(100):
        data = sampler(stream, params, config.n)
        try:
            summaries5(data)
            return data
        except DegenerateDataError:
            log.warning("dataset %d: degenerate draw %d, redrawing", j, attempt)
    raise DegenerateDataError(f"dataset {j}: 100 consecutive degenerate draws")


def run_sim_study(
    config: StudyConfig,
    progress: Callable[[int, int], None] | None = None,
) -> StudyReport:
    """Simulate ``config.datasets`` datasets at the truth and estimate from each.

    Runs accept-reject ABC on every dataset (plus the MMLE for 5-parameter
    studies).  Per-dataset failures are logged and recorded as NaN rows.
    """
    k, N = config.dim, config.datasets
    prior = config.prior_product()
    abc_est = np.full((N, k), np.nan)
    mmle_est = np.full((N, k), np.nan) if k == 5 else None
    proposals = np.zeros(N, dtype=np.int64)
    accepted = np.zeros(N, dtype=np.int64)
    capped = np.zeros(N, dtype=bool)
    wall = np.zeros(N)
    failures = []
    for j in range(N):
        started = time.perf_counter()
        data = _observed_dataset(config, j)
        if mmle_est is not None:
            try:
                mmle_est[j] = mmle5(data).alpha_hat
            except (PoleError, ConvergenceError, DegenerateDataError) as exc:
                failures.append(f"dataset {j} MMLE: {exc}")
                log.info("dataset %d: MMLE failed: %s", j, exc)
        problem = bivariate_beta_problem(data, config.model, prior, config.epsilon, raw_spearman=config.raw_spearman)
        result = abc_ar(
            problem,
            config.target_acceptances,
            config.proposal_cap,
            substream(config.master_seed, (j + 1) * DATASET_STRIDE),
        )
        proposals[j] = result.proposals_used
        accepted[j] = result.acceptances
        capped[j] = result.capped
        if result.acceptances:
            abc_est[j] = result.posterior_mean()
        else:
            failures.append(f"dataset {j} ABC: no acceptances within {config.proposal_cap} proposals")
        if result.capped:
            log.warning("dataset %d: cap reached with %d acceptances", j, result.acceptances)
        wall[j] = time.perf_counter() - started
        if progress is not None:
            progress(j + 1, N)
    return StudyReport(config, abc_est, proposals, accepted, capped, wall, mmle_est, failures)


def _alpha_names(k):
    return [f"alpha_{i}" for i in range(1, k + 1)]


def emit_report(report: StudyReport, directory) -> dict[str, Path]:
    """Write ``config.txt``, ``summary.csv``, ``estimates.csv`` and ``runs.csv``.

    ``summary.csv`` holds one row per (method, parameter) with bias and MSE;
    ``estimates.csv`` one row per (dataset, method) for histograms.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    k = report.truth.size
    names = _alpha_names(k)
    paths = {name: out / f"{name}.csv" for name in ("summary", "estimates", "runs")}
    paths["config"] = out / "config.txt"
    paths["config"].write_text(report.config.to_text(), encoding="utf-8")

    with open(paths["summary"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "parameter", "truth", "bias", "mse", "datasets_used",
                         "proposals_mean", "proposals_sd", "capped_runs"])
        for method in report.methods():
            bias, mse = report.bias(method), report.mse(method)
            for i, name in enumerate(names):
                if method == "ABC":
                    extra = [repr(report.proposals_mean), repr(report.proposals_sd), report.capped_runs]
                else:
                    extra = ["", "", ""]
                writer.writerow([method, name, repr(float(report.truth[i])), repr(float(bias[i])),
                                 repr(float(mse[i])), report.used(method), *extra])

    with open(paths["estimates"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset_index", "method", *names])
        methods = report.methods()
        for j in range(report.abc_estimates.shape[0]):
            for method in ("MMLE", "ABC"):
                if method in methods:
                    writer.writerow([j, method, *(repr(float(v)) for v in methods[method][j])])

    with open(paths["runs"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset_index", "proposals_used", "acceptances", "capped", "wall_time"])
        for j in range(report.proposals.size):
            writer.writerow([j, int(report.proposals[j]), int(report.acceptances[j]),
                             int(report.capped[j]), repr(float(report.wall_times[j]))])
    return paths


def load_report(directory) -> StudyReport:
    """Rebuild a :class:`StudyReport` from the files written by :func:`emit_report`."""
    src = Path(directory)
    config = parse_config(src / "config.txt")
    k = config.dim
    with open(src / "runs.csv", newline="", encoding="utf-8") as fh:
        runs = list(csv.DictReader(fh))
    N = len(runs)
    estimates = {"ABC": np.full((N, k), np.nan), "MMLE": np.full((N, k), np.nan)}
    seen_mmle = False
    with open(src / "estimates.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            j = int(row["dataset_index"])
            estimates[row["method"]][j] = [float(row[name]) for name in _alpha_names(k)]
            seen_mmle = seen_mmle or row["method"] == "MMLE"
    if N != config.datasets:
        config = replace(config, datasets=N)
    return StudyReport(
        config=config,
        abc_estimates=estimates["ABC"],
        proposals=np.array([int(r["proposals_used"]) for r in runs], dtype=np.int64),
        acceptances=np.array([int(r["acceptances"]) for r in runs], dtype=np.int64),
        capped=np.array([bool(int(r["capped"])) for r in runs]),
        wall_times=np.array([float(r["wall_time"]) for r in runs]),
        mmle_estimates=estimates["MMLE"] if seen_mmle else None,
    )
