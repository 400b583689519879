"""``bench <experiment> --config <path> --seed <u64> --out <path>`` entry point."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from ..errors import ConfigError
from .config import EXPERIMENTS, load_config, parse_timing
from .experiments import run_experiment, summary_table, timing_table

EXIT_CONFIG_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Run an ICP benchmark experiment and write a CSV report.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="flat key = value experiment config")
    p.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
    p.add_argument("--out", help="output CSV path (overrides the config)")
    p.add_argument("--timing", help="'measured' or 'fixed:<seconds>'")
    p.add_argument("--alpha", type=float, help="dynamic switching threshold")
    p.add_argument("--bins", type=int, help="number of pre-VSD bins")
    p.add_argument("--quiet", action="store_true", help="suppress progress and summary output")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"config is for {cfg.experiment!r}, not {args.experiment!r}")
        cfg = cfg.with_overrides(seed=args.seed, output_path=args.out, alpha=args.alpha, bins=args.bins)
        if args.timing is not None:
            cfg = replace(cfg, fixed_seconds=parse_timing(args.timing))
    except ConfigError as exc:
        print(f"bench: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    def progress(msg: str) -> None:
        if not args.quiet:
            print(msg, file=sys.stderr)

    report = run_experiment(cfg, progress=progress)
    report.write_csv(cfg.output_path)
    if not args.quiet:
        print(summary_table(report.rows))
        print()
        print(timing_table(report.wall_times))
        for name, bins in report.unfilled.items():
            print(f"warning: {name}: bins {bins} could not be filled", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
