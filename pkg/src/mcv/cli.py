"""Command-line experiment runner.

    mcv run <config> [--out DIR] [--seed N] [--jobs N] [--full-scale]
    mcv validate <config>

Exit codes: 0 success, 1 internal error, 2 config error, 3 data error.
The MCV_SEED environment variable overrides the config seed; --seed
overrides both.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ConfigError, format_resolved, parse_config
from .experiments import run_experiment
from .masks import DataError

logger = logging.getLogger("mcv")

# the paper-scale synthetic study (takes hours; desk scale is the default)
_FULL_SCALE = {"d": 10, "n_reps": 500, "n_test_per_mask": 100, "n_train": 500, "n_cal": 100, "maskable": None}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcv", description="Conformal prediction benchmarks under missing covariates")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment end to end")
    run.add_argument("config", help="path to the experiment config file")
    run.add_argument("--out", help="output directory (overrides config)")
    run.add_argument("--seed", type=int, help="seed (overrides config and MCV_SEED)")
    run.add_argument("--jobs", type=int, help="parallel workers over repetitions")
    run.add_argument("--full-scale", action="store_true", help="paper-scale synthetic study (slow)")

    val = sub.add_parser("validate", help="check a config and print it fully resolved")
    val.add_argument("config", help="path to the experiment config file")
    return parser


def _overrides(args) -> dict:
    overrides: dict = {}
    env_seed = os.environ.get("MCV_SEED")
    if env_seed is not None:
        try:
            overrides["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"MCV_SEED must be an integer, got {env_seed!r}") from exc
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    if getattr(args, "full_scale", False):
        overrides.update(_FULL_SCALE)
        logger.warning("full-scale run requested: 1023 patterns x 500 repetitions; expect hours of runtime")
    return overrides


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, _overrides(args))
        if args.command == "validate":
            sys.stdout.write(format_resolved(cfg))
            return 0
        result = run_experiment(cfg)
        logger.info("wrote reports to %s", result["out_dir"])
        return 0
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return 2
    except DataError as exc:
        logger.error("data error: %s", exc)
        return 3
    except Exception:  # internal failure: keep the traceback for debugging
        logger.exception("internal error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
