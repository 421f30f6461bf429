"""Command-line entry point: one subcommand per experiment stage plus ``run``."""
from __future__ import annotations

import argparse
import logging
import sys

from .pipeline.experiments import PRESETS, STAGES, ConfigError, load_config, run_experiment


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [section] key = value entries")
    common.add_argument("--preset", choices=sorted(PRESETS), help="start from a named preset")
    common.add_argument("--seed", type=int, help="master seed (non-negative)")
    common.add_argument("--out", default="runs/out", help="artifact directory")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration entry (repeatable)")
    common.add_argument("--dry-run", action="store_true",
                        help="validate and print the configuration without running")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hjplast", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage")
    sub.add_parser("run", parents=[common], help="run every stage in order")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.preset, args.config, args.seed, args.set)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    stages = None if args.command == "run" else [args.command]
    if args.dry_run:
        run_experiment(cfg, args.out, dry_run=True, stages=stages)
        print(cfg.to_ini())
        return 0
    try:
        written = run_experiment(cfg, args.out, stages=stages)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
