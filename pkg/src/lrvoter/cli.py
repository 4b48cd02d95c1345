"""Command line: ``lrvoter <pipeline> --config cfg.yaml [--seed S] [--out DIR] [--threads N]``."""
from __future__ import annotations

import argparse
import logging
import sys

import yaml

from .config import PIPELINES, ExperimentConfig
from .errors import ConfigError

__all__ = ["build_parser", "main"]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lrvoter", description="Long-range voter model experiments.")
    ap.add_argument("pipeline", choices=PIPELINES)
    ap.add_argument("--config", help="YAML experiment config; defaults are used for missing sections")
    ap.add_argument("--seed", type=int, help="master seed (unsigned 64-bit), overrides the config")
    ap.add_argument("--out", help="output directory, overrides the config")
    ap.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .experiment import run_experiment

    try:
        cfg = ExperimentConfig()
        if args.config:
            with open(args.config) as fh:
                raw = yaml.safe_load(fh) or {}
            cfg = ExperimentConfig.from_dict(raw)
            # the subcommand names the pipeline; a config written for another one is refused
            if isinstance(raw, dict) and "pipeline" in raw and raw["pipeline"] != args.pipeline:
                raise ConfigError(f"config is for pipeline {raw['pipeline']!r}, not {args.pipeline!r}")
        cfg.pipeline = args.pipeline
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.output = args.out
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg.validate()
    except (ConfigError, OSError, yaml.YAMLError) as exc:
        print(f"lrvoter: error: {exc}", file=sys.stderr)
        return 2
    try:
        b = run_experiment(cfg, threads=args.threads)
    except Exception as exc:  # the bundle was written with status "incomplete"
        print(f"lrvoter: {args.pipeline} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for rep in b.z_reports:
        z = rep["z"]["value"]
        print(f"{'PASS' if rep['passed'] else 'FAIL'}  z={z:+.3f}  {rep['label']}")
    print(f"wrote {cfg.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
