"""Command-line entry point: ``distretrace <experiment> [--config F] [--seed N] [--out F] [--jobs N]``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiments import EXPERIMENTS, ExperimentConfig, parse_config, run_experiment

log = logging.getLogger("distretrace")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distretrace", description="Distributional Retrace experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in EXPERIMENTS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0])
        p.add_argument("--config", type=Path, help="flat key = value config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for independent cells")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config is not None:
        cfg = parse_config(args.config.read_text(), cfg)
    if args.set:
        cfg = parse_config("\n".join(args.set), cfg)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args)
    except (OSError, ValueError) as exc:
        print(f"distretrace: bad configuration: {exc}", file=sys.stderr)
        return 2
    log.info("%s: seed %d", args.command, cfg.seed)
    result = run_experiment(args.command, cfg, jobs=max(1, args.jobs))
    text = result.to_csv(cfg)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
    for check in result.checks:
        print(check.line(), file=sys.stderr)
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
