"""Command line front end.

  blevy run <config.json> [--seed S] [--workers N] [--out PATH] [--check]
                          [--format csv|json] [--plot-data]
  blevy validate <config.json>
  blevy presets

Exit codes: 0 success, 2 config error, 3 downstream computation error,
4 acceptance-gap breach under --check.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .engine import ExplosionError
from .estimators import EstimatorError
from .harness import (
    ConfigError,
    check_rows,
    config_from_json,
    emit,
    rows_to_csv,
    run,
)
from .levy import LevyError
from .offspring import OffspringError
from .pde import PdeError
from .presets import PRESETS

DOWNSTREAM = (OffspringError, LevyError, PdeError, EstimatorError,
              ExplosionError)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blevy",
                                description="branching Lévy process laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="execute an experiment config")
    pr.add_argument("config", help="path to a JSON experiment config")
    pr.add_argument("--seed", type=int, default=None,
                    help="override the master seed in the config")
    pr.add_argument("--workers", type=int, default=None,
                    help="override the worker count in the config")
    pr.add_argument("--out", default=None,
                    help="output path (default: config's out, else stdout)")
    pr.add_argument("--format", choices=("csv", "json"), default="csv")
    pr.add_argument("--plot-data", action="store_true",
                    help="also write per-experiment series files")
    pr.add_argument("--check", action="store_true",
                    help="exit 4 if any row breaches its acceptance gap")

    pv = sub.add_parser("validate", help="validate a config and exit")
    pv.add_argument("config")

    sub.add_parser("presets", help="list the named functional presets")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "presets":
        for name, doc in PRESETS.items():
            print(f"{name:24s} {doc}")
        return 0

    try:
        cfg = config_from_json(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    if args.command == "validate":
        print("ok")
        return 0

    if args.seed is not None:
        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    if args.workers is not None:
        cfg = dataclasses.replace(cfg, workers=args.workers)

    try:
        rows = run(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DOWNSTREAM as e:
        print(f"computation error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3

    out = args.out or cfg.out
    if out:
        for path in emit(rows, out, args.format, args.plot_data):
            print(f"wrote {path}")
    else:
        sys.stdout.write(rows_to_csv(rows))

    if args.check:
        bad = check_rows(rows)
        if bad:
            for r in bad:
                print(f"gap breach: {r.experiment} param={r.param} "
                      f"estimate={r.estimate:.6g} target={r.target:.6g}",
                      file=sys.stderr)
            return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
