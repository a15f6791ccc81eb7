"""Command-line entry point: ``bbabc <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .abc import MHConfig, abc_ar, abc_mh, set_workers
from .betabinom import (
    BACON_EGGS_PRIOR,
    MH_PROPOSAL_SD,
    TRANSPOSED_PRIOR,
    EBPriorSpec,
    bundled_table,
    load_table,
    run_bacon_eggs,
)
from .errors import ConfigError
from .estimation import mmle5
from .model import BB5Params, BB8Params, BivariateDataset, sample_bb5, sample_bb8
from .numerics.rng import substream
from .priors import PriorProduct, parse_prior
from .problems import bivariate_beta_problem
from .study import DATASET_STRIDE, emit_report, parse_config, parse_truth, run_sim_study

log = logging.getLogger("bbabc")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(" ", "").strip("()").split(",") if v)


def _add_common(p, *, data=True, abc=True):
    p.add_argument("--model", choices=("bb5", "bb8"), help="default: inferred from --truth")
    p.add_argument("--truth", help="A1..A5 or comma-separated shapes")
    p.add_argument("--n", type=int, default=100, help="simulated dataset size (default 100)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--out", help="output path")
    if data:
        p.add_argument("--data", help="CSV file of (z1, z2) rows used instead of simulating")
    if abc:
        p.add_argument("--prior", default="G1", help="G1, G2, U1, U2, gamma(a,b) or moduniform(mu,p)")
        p.add_argument("--eps", default="0.6", help="tolerance (default 0.6; 'inf' allowed)")
        p.add_argument("--raw-spearman", action="store_true", help="8-summary runs: raw-difference Spearman")
        p.add_argument("--workers", type=int, help="threads for parallel kernels")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bbabc", description="Bivariate beta models fitted by ABC.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a bivariate beta sample as CSV")
    _add_common(p, data=False, abc=False)

    p = sub.add_parser("mmle", help="modified MLE of the 5-parameter model")
    _add_common(p, abc=False)

    p = sub.add_parser("abc-ar", help="accept-reject ABC on one dataset")
    _add_common(p)
    p.add_argument("--acceptances", type=int, default=1000)
    p.add_argument("--cap", type=float, default=15e6)

    p = sub.add_parser("abc-mh", help="Metropolis-Hastings ABC on one dataset")
    _add_common(p)
    p.add_argument("--iterations", type=int, default=100_000)
    p.add_argument("--proposal-sd", help="comma-separated step sizes (default 0.1 each)")
    p.add_argument("--init", help="comma-separated initial state (default: prior means)")

    p = sub.add_parser("study", help="repeated-dataset simulation study")
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--model", choices=("bb5", "bb8"))
    p.add_argument("--truth")
    p.add_argument("--prior")
    p.add_argument("--eps")
    p.add_argument("--n", type=int)
    p.add_argument("--datasets", type=int)
    p.add_argument("--acceptances", type=int)
    p.add_argument("--cap", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--raw-spearman", action="store_true", default=None)
    p.add_argument("--out", default="study_out", help="output directory (default study_out)")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("bacon-eggs", help="fit the bivariate beta-binomial purchase model")
    p.add_argument("--table", default="bacon_eggs",
                   help="bacon_eggs, bacon_eggs_transposed or a path to a square integer grid")
    p.add_argument("--variant", choices=("ar", "mh"), default="ar")
    p.add_argument("--prior", help="five comma-separated prior means (default: bundled vector for the table)")
    p.add_argument("--eps", type=float, default=100.0)
    p.add_argument("--acceptances", type=int, default=500)
    p.add_argument("--cap", type=float, default=15e6)
    p.add_argument("--iterations", type=int, default=2_000_000)
    p.add_argument("--init", help="MH initial state (default: pilot accept-reject posterior mean)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory for summary.csv and mean_table.txt")
    p.add_argument("--workers", type=int)
    return parser


def _load_pairs(path) -> BivariateDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    try:
        float(rows[0][0])
    except (ValueError, IndexError):
        rows = rows[1:]
    return BivariateDataset.from_pairs([[float(a), float(b)] for a, b, *_ in rows])


def _model_and_truth(args):
    if args.truth is None:
        raise ConfigError("--truth is required when no --data is given")
    truth = parse_truth(args.truth)
    model = args.model or {5: "bb5", 8: "bb8"}.get(len(truth))
    if model is None or len(truth) != (5 if model == "bb5" else 8):
        raise ConfigError(f"truth of length {len(truth)} does not fit model {model}")
    return model, truth


def _dataset(args) -> tuple[str, BivariateDataset]:
    if getattr(args, "data", None):
        data = _load_pairs(args.data)
        return args.model or "bb5", data
    model, truth = _model_and_truth(args)
    stream = substream(args.seed, 0)
    if model == "bb5":
        return model, sample_bb5(stream, BB5Params(truth), args.n)
    return model, sample_bb8(stream, BB8Params(truth), args.n)


def _write_rows(path, header, rows):
    fh = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if path:
            fh.close()


def _fmt(v) -> str:
    return repr(float(v))


def _eps(text) -> float:
    return math.inf if str(text).lower() in ("inf", "infinity") else float(text)


def _names(k):
    return [f"alpha_{i}" for i in range(1, k + 1)]


def cmd_simulate(args):
    _, data = _dataset(args)
    _write_rows(args.out, ["z1", "z2"], [(_fmt(a), _fmt(b)) for a, b in data.z])


def cmd_mmle(args):
    _, data = _dataset(args)
    res = mmle5(data)
    rows = [(n, _fmt(v), int(c)) for n, v, c in zip(_names(5), res.alpha_hat, res.clipped)]
    _write_rows(args.out, ["parameter", "estimate", "clipped"], rows)
    if res.complex_root:
        log.warning("quadratic had complex roots; alpha_5 set to 0")


def _problem(args):
    model, data = _dataset(args)
    k = 5 if model == "bb5" else 8
    prior = PriorProduct.iid(parse_prior(args.prior), k)
    return bivariate_beta_problem(data, model, prior, _eps(args.eps), raw_spearman=args.raw_spearman)


def cmd_abc_ar(args):
    set_workers(args.workers)
    problem = _problem(args)
    res = abc_ar(problem, args.acceptances, int(args.cap), substream(args.seed, DATASET_STRIDE))
    print(f"proposals={res.proposals_used} acceptances={res.acceptances} capped={res.capped} "
          f"time={res.wall_time:.2f}s", file=sys.stderr)
    if res.acceptances:
        print("posterior mean: " + " ".join(f"{v:.4f}" for v in res.posterior_mean()), file=sys.stderr)
    if args.out:
        _write_rows(args.out, _names(problem.dim), [[_fmt(v) for v in row] for row in res.accepted])


def cmd_abc_mh(args):
    set_workers(args.workers)
    problem = _problem(args)
    k = problem.dim
    init = _floats(args.init) if args.init else None
    sd = _floats(args.proposal_sd) if args.proposal_sd else (0.1,) * k
    res = abc_mh(problem, MHConfig(init, sd, args.iterations), substream(args.seed, DATASET_STRIDE))
    print(f"moves={res.moves} simulations={res.simulations} time={res.wall_time:.2f}s", file=sys.stderr)
    print("posterior mean: " + " ".join(f"{v:.4f}" for v in res.posterior_mean()), file=sys.stderr)
    if args.out:
        _write_rows(args.out, _names(k), [[_fmt(v) for v in row] for row in res.chain])


def cmd_study(args):
    set_workers(args.workers)
    overrides = {
        "model": args.model,
        "truth": args.truth,
        "prior": args.prior,
        "eps": args.eps,
        "n": args.n,
        "datasets": args.datasets,
        "acceptances": args.acceptances,
        "cap": args.cap,
        "seed": args.seed,
        "raw_spearman": args.raw_spearman,
    }
    config = parse_config(args.config, overrides)

    def progress(done, total):
        log.info("dataset %d/%d done", done, total)

    report = run_sim_study(config, progress)
    paths = emit_report(report, args.out)
    for method in report.methods():
        bias = " ".join(f"{v:+.3f}" for v in report.bias(method))
        mse = " ".join(f"{v:.3f}" for v in report.mse(method))
        print(f"{method:5s} bias: {bias}\n{method:5s} mse:  {mse}", file=sys.stderr)
    print(f"proposals mean(sd): {report.proposals_mean:,.0f} ({report.proposals_sd:,.0f}); "
          f"capped runs: {report.capped_runs}", file=sys.stderr)
    print(f"wrote {paths['summary'].parent}", file=sys.stderr)


def cmd_bacon_eggs(args):
    set_workers(args.workers)
    if Path(args.table).is_file():
        table = load_table(args.table)
        default_prior = BACON_EGGS_PRIOR
    else:
        table = bundled_table(args.table)
        default_prior = TRANSPOSED_PRIOR if args.table == "bacon_eggs_transposed" else BACON_EGGS_PRIOR
    prior = EBPriorSpec(_floats(args.prior)) if args.prior else default_prior
    res = run_bacon_eggs(
        args.variant,
        table,
        prior,
        args.eps,
        substream(args.seed, 0),
        acceptances=args.acceptances,
        proposal_cap=int(args.cap),
        iterations=args.iterations,
        proposal_sd=MH_PROPOSAL_SD,
        initial_state=_floats(args.init) if args.init else None,
    )
    if args.variant == "ar":
        print(f"proposals={res.engine.proposals_used} acceptances={res.engine.acceptances}", file=sys.stderr)
    else:
        print(f"moves={res.engine.moves} simulations={res.engine.simulations}", file=sys.stderr)
    for name, mean, se in res.summary.rows():
        print(f"{name:8s} {mean:10.4f} ({se:.4f})")
    print(f"{'r':8s} {res.r:10.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        res.to_csv(out / "summary.csv")
        if res.mean_table is not None:
            np.savetxt(out / "mean_table.txt", res.mean_table, fmt="%.2f")


COMMANDS = {
    "simulate": cmd_simulate,
    "mmle": cmd_mmle,
    "abc-ar": cmd_abc_ar,
    "abc-mh": cmd_abc_mh,
    "study": cmd_study,
    "bacon-eggs": cmd_bacon_eggs,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"bbabc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
