"""Command-line entry point.

    unicon run --config <path> [--seed N] [--protocol P] [--out DIR]

Command-line overrides beat config-file values.  Exit codes: 0 success,
1 runtime failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback

from .exceptions import ConfigError
from .runner import load_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unicon")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute one training experiment")
    run.add_argument("--config", required=True, help="TOML experiment config")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--protocol",
                     choices=["unicon", "sl_baseline", "centralized"],
                     default=None)
    run.add_argument("--out", default=None, help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.protocol is not None:
            cfg.protocol = args.protocol
        if args.out is not None:
            cfg.out_dir = args.out
        cfg.validate()
        # cap on worker threads; the orchestrator is sequential, so any
        # positive value is honored trivially, but reject nonsense early
        threads = os.environ.get("UNICON_THREADS")
        if threads is not None and (not threads.isdigit() or int(threads) < 1):
            raise ConfigError(f"UNICON_THREADS must be a positive integer, "
                              f"got {threads!r}")
    except (ConfigError, OSError, ValueError) as exc:
        print(f"invalid config ({args.config}): {exc}", file=sys.stderr)
        return 2
    try:
        out = run_experiment(cfg)
    except Exception:
        traceback.print_exc()
        return 1
    print(f"wrote artifacts to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
