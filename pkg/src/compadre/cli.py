"""Command-line entry point.

Exit status: 0 on success, 2 for bad input, 3 when a solver fails.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .core import Effect, fit, predict
from .errors import InputError, NumericalError
from .simulation import METHODS, SimSetting, aggregate, mad_ratios, run_campaign

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


def selection_table(labels, responses, covariates) -> str:
    """Response-by-covariate grid of N / L / NL codes."""
    width = max([len(c) for c in covariates] + [2])
    rwidth = max(len(r) for r in responses)
    lines = [" " * rwidth + " " + " ".join(c.rjust(width) for c in covariates)]
    for q, name in enumerate(responses):
        cells = [Effect(int(labels[j, q])).code.rjust(width) for j in range(len(covariates))]
        lines.append(name.ljust(rwidth) + " " + " ".join(cells))
    return "\n".join(lines)


def _columns(header, data, names, path):
    missing = [n for n in names if n not in header]
    if missing:
        raise InputError(f"{path}: missing columns {missing}")
    return data[:, [header.index(n) for n in names]]


def cmd_fit(args):
    header, data = io.read_csv(args.data)
    options = io.parse_config(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        options["seed"] = args.seed
    responses = options.get("responses")
    if not responses:
        raise InputError("config must name the response columns (responses = a, b, ...)")
    covariates = options.get("covariates") or [h for h in header if h not in responses]
    if set(responses) & set(covariates):
        raise InputError("a column cannot be both a response and a covariate")
    Y = _columns(header, data, responses, args.data)
    X = _columns(header, data, covariates, args.data)
    report = fit(Y, X, io.fit_config_from(options))
    io.save_archive(args.out, report, responses, covariates)
    print(selection_table(report.labels, responses, covariates))
    print(f"iterations: {report.n_iter}  converged: {report.converged}  "
          f"final mse: {report.mse_trace[-1]:.6g}")
    return EXIT_OK


def cmd_predict(args):
    report, responses, covariates = io.load_archive(args.archive)
    header, data = io.read_csv(args.data)
    X = _columns(header, data, covariates, args.data)
    io.write_csv(args.out, [f"pred_{r}" for r in responses], predict(report, X))
    return EXIT_OK


def cmd_simulate(args):
    methods = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise InputError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    if args.reps < 1:
        raise InputError("--reps must be at least 1")
    try:
        setting = SimSetting(n=args.n, p=args.p, Q=args.q, rho=args.rho, delta=args.delta,
                             seed=args.seed, shape=args.shape)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if setting.n < 10:
        raise InputError("--n must be at least 10")
    rows = run_campaign(setting, args.reps, methods, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_records(out / "replicates.csv", rows)
    summary = aggregate(rows)
    if "compadre" in methods and "padre" in methods:
        ratios = mad_ratios(rows)
        for row in summary:
            row["mad_ratio_median"] = float(np.median(ratios)) if row["method"] == "compadre" else None
    io.write_records(out / "summary.csv", summary)
    for row in summary:
        print(f"{row['method']:>9}  TPR {row['tpr_median']}  FPR {row['fpr_median']}  "
              f"MAD {row['mad_median']}")
    return EXIT_OK


def cmd_export_network(args):
    if args.format not in ("dot", "json"):
        raise InputError(f"unknown format {args.format!r}")
    report, responses, _ = io.load_archive(args.archive)
    P = report.state.precision.precision
    text = io.network_dot(P, responses) if args.format == "dot" else io.network_json(P, responses)
    Path(args.out).write_text(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compadre", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model to a CSV and write an archive")
    p.add_argument("data")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", required=True, help="archive path (JSON)")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict responses for new covariate rows")
    p.add_argument("archive")
    p.add_argument("data")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="run a simulation campaign")
    p.add_argument("--n", type=int, default=250)
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--q", type=int, default=10)
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--delta", type=float, default=0.25)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape", type=int, help="use the single-shape design with this function id")
    p.add_argument("--methods", default="compadre,padre")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export-network", help="write the precision network as DOT or JSON")
    p.add_argument("archive")
    p.add_argument("--format", default="dot")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_network)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
