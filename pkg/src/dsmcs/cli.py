"""Command line entry point: ``dsmcs run | grid | verify``."""

from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .config import RunConfig
from .verify import verify_all


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="dsmcs",
        description="Train and verify differentiable SMC samplers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train a single configuration")
    p_run.add_argument("--config", required=True, help="RunConfig JSON file")
    p_run.add_argument("--out", default="run", help="output directory")

    p_grid = sub.add_parser("grid", help="run a grid of configurations")
    p_grid.add_argument("--config", required=True, help="grid JSON file")
    p_grid.add_argument("--out", default="grid", help="output directory")

    p_verify = sub.add_parser("verify", help="numerical verification suites")
    p_verify.add_argument("--suite", default="all",
                          choices=["all", "grad", "theorem", "unbiased"])
    p_verify.add_argument("--replicates", type=int, default=100000,
                          help="replicates for the unbiasedness oracle")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)

    if args.command == "run":
        try:
            cfg = RunConfig.from_json(args.config)
        except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return 2
        final = harness.run(cfg, args.out)
        print(json.dumps(final, indent=2))
        return 0

    if args.command == "grid":
        try:
            grid_cfg = harness.load_grid_config(args.config)
        except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return 2
        harness.grid(grid_cfg, args.out)
        print(f"wrote {args.out}/summary.csv")
        return 0

    suites = (("grad", "theorem", "unbiased") if args.suite == "all"
              else (args.suite,))
    report = verify_all(suites=suites, replicates=args.replicates)
    print(json.dumps(report, indent=2))
    return 0 if report["pass"] else 1


if __name__ == "__main__":
    sys.exit(main())
