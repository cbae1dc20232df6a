"""Command-line interface: one subcommand per run mode."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import ExperimentConfig
from .errors import KdeprocError
from .harness import MODES, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kdeproc",
        description="Simulation and diagnostics for kernel predictive processes",
    )
    parser.add_argument("--version", action="version", version=f"kdeproc {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run the {mode} mode")
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                       help="override run.master_seed")
        p.add_argument("--out", default=None, help="override run.output_dir")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ExperimentConfig.from_file(args.config).with_overrides(
            master_seed=args.seed, output_dir=args.out
        )
        run(config, args.mode)
    except KdeprocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
