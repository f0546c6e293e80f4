"""Command-line entry point: one subcommand per experiment kind."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import ConfigError, PRECODERS, load_config
from .harness import StageError, emit_results, run_digest, sweep

COMMANDS = {
    "nmse-sweep": "nmse-sweep",
    "maxmin": "maxmin-cdf",
    "ee-sweep": "ee-sweep",
    "validate-aqnm": "validate-aqnm",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfmimo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML config file (defaults if omitted)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output CSV path (overrides the config)")
        p.add_argument("--precoder", choices=PRECODERS, help="precoder selection")
        p.add_argument("--threads", type=int, default=1, help="worker processes across drops")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, power, spec = load_config(args.config)
        spec = dataclasses.replace(spec, kind=COMMANDS[args.command])
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed", "must be a non-negative integer")
            spec = dataclasses.replace(spec, seed=args.seed)
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.out:
            spec = dataclasses.replace(spec, out=args.out)
        if args.precoder:
            spec = dataclasses.replace(spec, precoder=args.precoder)
        spec.validate()
        if args.threads < 1:
            raise ConfigError("threads", "must be >= 1")
    except (ConfigError, OSError) as exc:
        print(f"error [config] {exc}", file=sys.stderr)
        return 2
    try:
        rows = sweep(cfg, power, spec, threads=args.threads)
        path = emit_results(rows, spec.out, run_digest(cfg, power, spec))
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(rows)} rows to {path}")
    return 0
