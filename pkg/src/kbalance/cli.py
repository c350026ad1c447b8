"""Command-line interface: weights, estimate, simulate, fetch, baselines."""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np
import pandas as pd

from . import __version__, baselines, data, sim
from .errors import KbalanceError
from .pipeline import RunConfig, run_pipeline


def _format_scalar(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if x is None:
        return "null"
    if isinstance(x, str):
        import json

        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return format(x, ".17g")
    raise TypeError(f"cannot serialize {type(x)}")


def to_json(obj, indent: int = 0) -> str:
    """JSON with insertion-ordered keys and 17-significant-digit floats."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{inner}"{k}": {to_json(v, indent + 1)}' for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        items = [f"{inner}{to_json(v, indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    return _format_scalar(obj)


def emit_report(report_dict: dict, out_dir, filename: str = "report.json") -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, filename)
    with open(path, "w") as f:
        f.write(to_json(report_dict) + "\n")
    return path


def _report_payload(config: RunConfig, result, trimmed_ids) -> dict:
    rep = result.report
    return {
        "config": config.as_dict(),
        "estimand": rep.estimand,
        "point": rep.point,
        "se_fixed": rep.se_fixed,
        "ci_boot": None if rep.ci_boot is None else list(rep.ci_boot),
        "min90": rep.min90,
        "l1_before": rep.l1_before,
        "l1_after": rep.l1_after,
        "r": rep.r,
        "variance_explained": rep.variance_explained,
        "ipw_max_dev": rep.ipw_max_dev,
        "n_trimmed": rep.n_trimmed,
        "trimmed_ids": [int(i) for i in trimmed_ids],
        "version": __version__,
    }


def _write_weights(result, out_dir) -> None:
    sol = result.solution
    ds = result.dataset
    if sol.weights_treated is None:
        unit_ids = ds.control_rows if result.report.estimand == "att" else ds.treated_rows
        df = pd.DataFrame({"unit_id": unit_ids, "weight": sol.weights})
    else:
        df = pd.DataFrame(
            {
                "unit_id": np.concatenate([ds.treated_rows, ds.control_rows]),
                "weight": np.concatenate([sol.weights_treated, sol.weights]),
            }
        )
    df.to_csv(os.path.join(out_dir, "weights.csv"), index=False)
    grid = pd.DataFrame(sol.feasible_r_grid, columns=["r", "l1"])
    grid.to_csv(os.path.join(out_dir, "rgrid.csv"), index=False)


def _load_input(args) -> data.Dataset:
    if args.benchmark:
        if args.benchmark != "lalonde":
            raise KbalanceError(f"unknown benchmark {args.benchmark!r}")
        return data.load_lalonde(args.cache_dir, covariates=args.covariates)
    if not args.input:
        raise KbalanceError("either --input or --benchmark is required")
    return data.load_csv(args.input, args.treatment_col, args.outcome_col)


def _config_from_args(args, include_bootstrap: bool) -> RunConfig:
    return RunConfig(
        estimand=args.estimand,
        b=args.b,
        distance=args.distance,
        exponent_convention=args.exponent_convention,
        trimratio=args.trimratio,
        r_max=args.r_max,
        patience=args.patience,
        tol=args.tol,
        max_iter=args.max_iter,
        bootstrap=args.bootstrap if include_bootstrap else 0,
        seed=args.seed,
        threads=args.threads,
    )


def _add_common(parser: argparse.ArgumentParser, with_pipeline: bool = True) -> None:
    parser.add_argument("--input", help="CSV input file")
    parser.add_argument("--treatment-col", default="d")
    parser.add_argument("--outcome-col", default=None)
    parser.add_argument("--benchmark", default=None, help="bundled benchmark name (lalonde)")
    parser.add_argument("--covariates", default="standard",
                        choices=["standard", "simple", "squares"],
                        help="benchmark covariate specification")
    parser.add_argument("--cache-dir", default=os.path.expanduser("~/.cache/kbalance"))
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    if with_pipeline:
        parser.add_argument("--estimand", choices=["att", "atc", "ate"], default="att")
        parser.add_argument("--b", type=float, default=None)
        parser.add_argument("--distance", choices=["euclidean", "mahalanobis"],
                            default="euclidean")
        parser.add_argument("--exponent-convention", choices=["half", "full"],
                            default="half")
        parser.add_argument("--trimratio", type=float, default=None)
        parser.add_argument("--r-max", type=int, default=None)
        parser.add_argument("--patience", type=int, default=15)
        parser.add_argument("--tol", type=float, default=1e-8)
        parser.add_argument("--max-iter", type=int, default=200)
        parser.add_argument("--bootstrap", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kbalance")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("weights", "estimate"):
        p = sub.add_parser(name)
        _add_common(p)

    p = sub.add_parser("baselines")
    _add_common(p, with_pipeline=False)
    p.add_argument("--method", choices=["raw_dim", "mean_balance_x", "mahalanobis_match",
                                        "least_squares"], required=True)
    p.add_argument("--expansion", choices=["none", "squares", "squares_and_interactions"],
                   default="none")

    p = sub.add_parser("simulate")
    _add_common(p)
    p.add_argument("--study", choices=["figure12", "density_fig", "rscan_fig"],
                   required=True)
    p.add_argument("--reps", type=int, default=500)

    p = sub.add_parser("fetch")
    p.add_argument("--benchmark", choices=["lalonde", "nsw_dw", "psid1"],
                   default="lalonde")
    p.add_argument("--cache-dir", default=os.path.expanduser("~/.cache/kbalance"))
    return parser


def _cmd_weights(args, with_estimate: bool) -> int:
    ds = _load_input(args)
    config = _config_from_args(args, include_bootstrap=with_estimate)
    result = run_pipeline(ds, config)
    os.makedirs(args.out, exist_ok=True)
    payload = _report_payload(config, result, result.trimmed_rows)
    if not with_estimate:
        payload["point"] = None
        payload["se_fixed"] = None
        payload["ci_boot"] = None
    emit_report(payload, args.out)
    _write_weights(result, args.out)
    return 0


def _cmd_baselines(args) -> int:
    ds = _load_input(args)
    if args.method == "raw_dim":
        res = baselines.raw_dim(ds)
    elif args.method == "mean_balance_x":
        res = baselines.mean_balance_x(ds, expansion=args.expansion)
    elif args.method == "mahalanobis_match":
        res = baselines.mahalanobis_match(ds, expansion=args.expansion)
    else:
        res = baselines.least_squares(ds, expansion=args.expansion)
    os.makedirs(args.out, exist_ok=True)
    table = res.balance_table.copy()
    table["method"] = res.method
    table.to_csv(os.path.join(args.out, "balance.csv"), index=False)
    emit_report(
        {
            "method": res.method,
            "point": res.point,
            "dropped_columns": res.dropped_columns,
            "version": __version__,
        },
        args.out,
        filename="baseline_report.json",
    )
    return 0


def _cmd_simulate(args) -> int:
    config = _config_from_args(args, include_bootstrap=False)
    report = sim.run_study(args.study, args.reps, args.seed, config)
    os.makedirs(args.out, exist_ok=True)
    report.summary.to_csv(os.path.join(args.out, "study_summary.csv"), index=False)
    if report.detail is not None:
        report.detail.to_csv(os.path.join(args.out, "study_detail.csv"), index=False)
    emit_report(
        {
            "config": config.as_dict(),
            "study": report.study,
            "replications": report.replications,
            "seed": report.seed,
            "summary": report.summary.to_dict(orient="records"),
            "version": __version__,
        },
        args.out,
        filename="study_report.json",
    )
    return 0


def _cmd_fetch(args) -> int:
    names = ("nsw_dw", "psid1") if args.benchmark == "lalonde" else (args.benchmark,)
    for name in names:
        data.fetch_benchmark(name, args.cache_dir)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "weights":
            return _cmd_weights(args, with_estimate=False)
        if args.command == "estimate":
            return _cmd_weights(args, with_estimate=True)
        if args.command == "baselines":
            return _cmd_baselines(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "fetch":
            return _cmd_fetch(args)
        parser.error(f"unknown command {args.command!r}")
    except KbalanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
