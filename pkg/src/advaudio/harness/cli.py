"""Command-line entry point: ``advaudio {prepare,train,attack,report}``.

Exit codes: 0 success, 2 configuration error, 3 missing prerequisite
artifacts, 4 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import experiments
from .config import ConfigError, ExperimentConfig, load_config

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_RUNTIME = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--workers", type=int, help="parallel attack worker processes")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    common.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")

    parser = argparse.ArgumentParser(prog="advaudio", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("prepare", parents=[common], help="synthesize the dataset and write WAVs + manifest")
    sub.add_parser("train", parents=[common], help="train every configured model")
    attack = sub.add_parser("attack", parents=[common], help="run one experiment")
    attack.add_argument("--experiment", type=int, choices=(1, 2, 3), required=True)
    sub.add_parser("report", parents=[common], help="summarize existing experiment outputs")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {k: v for k, v in (("seed", args.seed), ("workers", args.workers), ("out", args.out)) if v is not None}
    return cfg.replace(**changes) if changes else cfg


def run(args) -> int:
    cfg = resolve_config(args)
    if args.command == "prepare":
        experiments.prepare(cfg)
    elif args.command == "train":
        reports, failures = experiments.train_models(cfg)
        if failures:
            for arch, msg in failures.items():
                print(f"training failed for {arch}: {msg}", file=sys.stderr)
            return EXIT_RUNTIME
    elif args.command == "attack":
        step = {1: experiments.experiment1, 2: experiments.experiment2, 3: experiments.experiment3}
        step[args.experiment](cfg)
    else:
        print(experiments.report(cfg), end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return run(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except experiments.PreconditionError as e:
        print(f"precondition failed: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    except Exception as e:  # noqa: BLE001 - every other failure maps to one exit code
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
