"""Command line entry point: ``sparsemp solve|bench|report``.

Exit status is 0 on success, 2 if any solved cell did not converge and 1
on bad input.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import harness
from .io import DataParseError

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNCONVERGED = 2


def _common(p: argparse.ArgumentParser):
    p.add_argument("--method", action="append",
                   help="method name (repeatable; overrides the config)")
    p.add_argument("--k", action="append", type=float,
                   help="sparsity level (repeatable; overrides the config)")
    p.add_argument("--seed", action="append", type=int,
                   help="seed (repeatable; falls back to $SPARSEMP_SEED)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="extra config line, e.g. mpec_epm.rho0=0.1 or n=200")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsemp",
                                     description="Sparsity-constrained minimization.")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="solve one application instance")
    ps.add_argument("--config", help="experiment config file")
    ps.add_argument("--app", help="application name")
    ps.add_argument("--data", help="data file for the application")
    _common(ps)

    pb = sub.add_parser("bench", help="run an experiment grid from a config file")
    pb.add_argument("config", help="experiment config file")
    pb.add_argument("--jobs", type=int, help="parallel worker processes")
    _common(pb)

    pr = sub.add_parser("report", help="comparison table and figures for a results directory")
    pr.add_argument("results", help="results directory or results.csv")
    pr.add_argument("--out", help="where to write report.txt and figures")
    return parser


def _configure(args) -> harness.ExperimentConfig:
    if getattr(args, "config", None):
        cfg = harness.load_config(args.config)
    else:
        cfg = harness.ExperimentConfig()
    for item in args.set:
        if "=" not in item:
            raise harness.ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = (t.strip() for t in item.split("=", 1))
        harness.apply_setting(cfg, key, val)
    if getattr(args, "app", None):
        cfg.application = args.app
    if getattr(args, "data", None):
        cfg.data_path = args.data
    if args.method:
        cfg.methods = tuple(args.method)
    if args.k:
        cfg.k, cfg.k_fractions = tuple(args.k), ()
    if args.seed:
        cfg.seeds = tuple(args.seed)
    elif not (getattr(args, "config", None) and _config_sets_seed(args.config)):
        env = os.environ.get("SPARSEMP_SEED")
        if env is not None:
            cfg.seeds = (int(env),)
    if args.out:
        cfg.out = args.out
    if getattr(args, "jobs", None):
        cfg.jobs = args.jobs
    return cfg.validate()


def _config_sets_seed(path) -> bool:
    for line in Path(path).read_text().splitlines():
        key = line.split("#", 1)[0].split("=", 1)[0].strip()
        if key in ("seed", "seeds"):
            return True
    return False


def _run(cfg) -> int:
    rows = harness.run_experiment(cfg)
    for r in rows:
        flag = "" if r.converged else "  (unconverged)"
        print(f"{r.method:<10} k={r.k:g} seed={r.seed} objective={r.objective:.10g} "
              f"l0={r.l0_achieved} iters={r.outer_iterations}{flag}")
    print(f"results written to {Path(cfg.out) / 'results.csv'}")
    return EXIT_OK if all(r.converged for r in rows) else EXIT_UNCONVERGED


def _report(args) -> int:
    from . import plotting

    src = Path(args.results)
    csv_path = src / "results.csv" if src.is_dir() else src
    rows = harness.read_results(csv_path)
    text, _ = harness.compare_report(rows)
    out = Path(args.out) if args.out else csv_path.parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text)
    plotting.plot_objective_vs_k(rows, out / "objective_vs_k.png")
    harness.write_plot_data(rows, out / "objective_vs_k.dat")
    traces = sorted((csv_path.parent / "traces").glob("*.csv"))
    if traces:
        plotting.plot_traces(traces, out / "traces.png")
    print(text, end="")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return _report(args)
        return _run(_configure(args))
    except (harness.ConfigError, DataParseError, FileNotFoundError, ValueError) as exc:
        print(f"sparsemp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
