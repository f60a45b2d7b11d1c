"""Command-line entry point: ``python -m deppred <subcommand>``.

Exit codes: 0 success, 2 data error, 3 convergence failure, 4 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .analysis import ConfigError, RunConfig, bootstrap_only, describe, dumps, locate_breaks, run_full_analysis
from .bootstrap import BootstrapError
from .breaks import BreakError
from .data import DataError, bundled_path, derive_state, ingest_csv
from .marginal import ConvergenceError

EXIT_OK, EXIT_DATA, EXIT_CONVERGENCE, EXIT_CONFIG = 0, 2, 3, 4

# RunConfig field -> (flag, argparse kwargs)
_RUN_FLAGS = {
    "y1_exog": ("--y1-exog", {"action": argparse.BooleanOptionalAction, "help": "state in the mean of series 1"}),
    "y1_gjr": ("--y1-gjr", {"action": argparse.BooleanOptionalAction, "help": "GJR term for series 1"}),
    "y2_exog": ("--y2-exog", {"action": argparse.BooleanOptionalAction, "help": "state in the mean of series 2"}),
    "y2_gjr": ("--y2-gjr", {"action": argparse.BooleanOptionalAction, "help": "GJR term for series 2"}),
    "regions": ("--regions", {"nargs": "+", "choices": ["lower", "upper"]}),
    "grid_step": ("--grid-step", {"type": float}),
    "s_stride": ("--s-stride", {"type": int}),
    "B": ("--B", {"type": int, "help": "bootstrap replications"}),
    "block_length": ("--block-length", {"help": "'auto' or an integer"}),
    "iid_bootstrap": ("--iid-bootstrap", {"action": argparse.BooleanOptionalAction}),
    "alpha": ("--alpha", {"type": float, "help": "overall significance level"}),
    "seed": ("--seed", {"type": int}),
    "state_rule": ("--state-rule", {"help": "'down_market', 'z' or the name of an extra column"}),
    "n_min": ("--n-min", {"type": int, "help": "minimum subsample length"}),
    "a_max": ("--a-max", {"type": float}),
    "threads": ("--threads", {"type": int, "help": "worker cap"}),
}


def _add_run_flags(p):
    for name, (flag, kw) in _RUN_FLAGS.items():
        p.add_argument(flag, dest=name, default=None, **kw)
    p.add_argument("--config", type=Path, help="JSON file whose entries override the flags")


def _add_data_flags(p):
    p.add_argument("--data", type=Path, default=None, help="CSV input (default: bundled synthetic panel)")
    p.add_argument("--date-col", default="date")
    p.add_argument("--y1-col", default=None)
    p.add_argument("--y2-col", default=None)
    p.add_argument("--z-col", default=None)
    p.add_argument("--extra-cols", nargs="*", default=())
    p.add_argument("--prices", action="store_true", help="input columns are prices; use log returns")
    p.add_argument("--min-rows", type=int, default=250)


def _load_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def run_config_from_args(args) -> RunConfig:
    d = {k: getattr(args, k) for k in _RUN_FLAGS if getattr(args, k, None) is not None}
    if getattr(args, "config", None):
        d.update(_load_json(args.config))
    return RunConfig.from_dict(d)


def _load_data(args, cfg: RunConfig):
    if args.data is None:
        cols = {"date": "date", "y1": args.y1_col or "stock", "y2": args.y2_col or "market"}
        path = bundled_path()
    else:
        cols = {"date": args.date_col, "y1": args.y1_col or "y1", "y2": args.y2_col or "y2"}
        path = args.data
    if args.z_col:
        cols["z"] = args.z_col
    ds = ingest_csv(path, cols, min_rows=args.min_rows, prices=args.prices, extra_columns=tuple(args.extra_cols))
    return derive_state(ds, cfg.state_rule)


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_test(args):
    cfg = run_config_from_args(args)
    ds = _load_data(args, cfg)
    _emit(dumps(run_full_analysis(ds, cfg, timings=args.timings)), args.out)


def cmd_bootstrap_only(args):
    cfg = run_config_from_args(args)
    ds = _load_data(args, cfg)
    _emit(dumps(bootstrap_only(ds, cfg)), args.out)


def cmd_locate_break(args):
    cfg = run_config_from_args(args)
    ds = _load_data(args, cfg)
    _emit(dumps(locate_breaks(ds, cfg)), args.out)


def cmd_describe(args):
    cfg = run_config_from_args(args)
    ds = _load_data(args, cfg)
    rep = describe(ds, cfg, step=args.step)
    if args.out_prefix:
        prefix = str(args.out_prefix)
        Path(prefix + "_curves.csv").write_text(rep.curves_csv())
        Path(prefix + "_ranks.csv").write_text(rep.ranks_csv())
    sys.stdout.write(dumps(rep.summary()))


def cmd_simulate(args):
    from .dgp import MCConfig, load_scenarios, standard_scenarios, run_mc_experiment

    opts = {
        "B": args.B, "seed": args.seed, "regions": tuple(args.regions) if args.regions else None,
        "block_length": args.block_length, "threads": args.threads, "level": args.level,
    }
    opts = {k: v for k, v in opts.items() if v is not None}
    if args.config:
        opts.update(_load_json(args.config))
    if "block_length" in opts and opts["block_length"] != "auto":
        opts["block_length"] = int(opts["block_length"])
    if "regions" in opts:
        opts["regions"] = tuple(opts["regions"])
    names = {f.name for f in dataclasses.fields(MCConfig)}
    if set(opts) - names:
        raise ConfigError(f"unknown simulation keys: {sorted(set(opts) - names)}")
    mc = MCConfig(**opts)
    try:
        scenarios = load_scenarios(args.scenarios) if args.scenarios else standard_scenarios()
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario file: {exc}") from exc
    if args.only:
        scenarios = [s for s in scenarios if s.name in set(args.only)]
    if args.reps < args.min_reps:
        raise ConfigError(f"reps must be at least {args.min_reps}")
    res = run_mc_experiment(scenarios, args.n, args.reps, mc, min_reps=args.min_reps)
    _emit(res.to_csv(), args.out)
    if args.records:
        Path(args.records).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in res.records))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deppred", description="Tests for state-dependent copula dependence.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="full empirical workflow with break splitting")
    _add_data_flags(p)
    _add_run_flags(p)
    p.add_argument("--out", type=Path)
    p.add_argument("--timings", action="store_true", help="add wall-clock timings to the report")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("bootstrap-only", help="full-span statistics and bootstrap p-values")
    _add_data_flags(p)
    _add_run_flags(p)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_bootstrap_only)

    p = sub.add_parser("locate-break", help="CUSUM break date per region")
    _add_data_flags(p)
    _add_run_flags(p)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_locate_break)

    p = sub.add_parser("describe", help="regime Spearman correlations and quantile-dependence curves")
    _add_data_flags(p)
    _add_run_flags(p)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--out-prefix", type=Path)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("simulate", help="Monte Carlo rejection-rate table")
    p.add_argument("--scenarios", type=Path, help="JSON list of scenario specifications")
    p.add_argument("--only", nargs="*", help="scenario names to keep")
    p.add_argument("--n", type=int, nargs="+", default=[1000])
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--min-reps", type=int, default=100)
    p.add_argument("--B", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--level", type=float)
    p.add_argument("--regions", nargs="+", choices=["lower", "upper"])
    p.add_argument("--block-length")
    p.add_argument("--threads", type=int)
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, help="CSV table (default stdout)")
    p.add_argument("--records", type=Path, help="per-replication JSON lines")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (DataError, BreakError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConvergenceError, BootstrapError) as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
