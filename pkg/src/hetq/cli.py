"""Command-line entry point: ``hetq analyze|frontier|simulate|sweep``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments as ex
from .analytics import DEFAULT_EPS_TOL
from .errors import HetqError


def _emit(text: str, out: str | None) -> None:
    if out is None:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            sys.stderr.close()
    else:
        Path(out).write_text(text, newline="")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetq", description="Two-class eager/tolerant queueing toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the spec's random seed")
    common.add_argument("--out", default=None, help="output CSV path (default: stdout)")
    common.add_argument("--tol", type=float, default=DEFAULT_EPS_TOL, help="tail-mass tolerance of the analysis")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("analyze", parents=[common], help="limit performance of one policy")
    p.add_argument("policy_file")
    p = sub.add_parser("frontier", parents=[common], help="Pareto frontier over a grid of occupancy budgets")
    p.add_argument("spec")
    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo run of the pre-limit system")
    p.add_argument("spec")
    p = sub.add_parser("sweep", parents=[common], help="run an experiment spec of any kind")
    p.add_argument("spec")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "analyze":
            table = ex.run_analyze(ex.load_spec(args.policy_file), args.tol)
        elif args.command == "frontier":
            table = ex.run_frontier(ex.load_spec(args.spec))
        elif args.command == "simulate":
            table, summary = ex.run_simulate(ex.load_spec(args.spec), args.seed)
            print(summary, file=sys.stderr)
        else:
            table = ex.run_sweep(ex.load_spec(args.spec), args.seed)
    except (HetqError, OSError) as exc:
        print(f"hetq: error: {exc}", file=sys.stderr)
        return 2
    _emit(table.to_csv(), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
