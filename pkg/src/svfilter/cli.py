"""Command-line entry points.

Subcommands:
  run <config>          filtered episode (single_robot or intersection)
  sweep <config>        restrictiveness grid sweep
  sample-size           print the required sample count for (epsilon, beta)
  validate <config>     parse, resolve, and report derived quantities

Exit codes: 0 success, 1 safety-chain violation or initialization failure
(fail closed), 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from svfilter.config import load_config
from svfilter.errors import ConfigError, InitializationError, InvariantViolationError
from svfilter.experiments import EpisodeLog, Status, run_intersection, run_single_robot, run_sweep
from svfilter.io import write_episode, write_sweep
from svfilter.scenario import required_sample_size

EXIT_OK = 0
EXIT_SAFETY = 1
EXIT_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svfilter", description="Sampling-based safety filter runner"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a filtered episode")
    p_run.add_argument("config", help="path to the YAML run configuration")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")

    p_sweep = sub.add_parser("sweep", help="run a restrictiveness grid sweep")
    p_sweep.add_argument("config", help="path to the YAML run configuration")
    p_sweep.add_argument("--out", default="out", help="output directory")
    p_sweep.add_argument("--seed", type=int, default=None, help="override the config seed")

    p_size = sub.add_parser("sample-size", help="required sample count for (epsilon, beta)")
    p_size.add_argument("--epsilon", type=float, required=True)
    p_size.add_argument("--beta", type=float, required=True)

    p_val = sub.add_parser("validate", help="validate a configuration")
    p_val.add_argument("config", help="path to the YAML run configuration")
    return parser


def _print_summary(summary: dict):
    for key in sorted(summary):
        if key in ("meta",):
            continue
        print(f"{key}: {summary[key]}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "sample-size":
        try:
            print(required_sample_size(args.epsilon, args.beta))
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        for line in cfg.summary_lines():
            print(line)
        print(f"config hash: {cfg.config_hash()}")
        print("ok")
        return EXIT_OK

    if args.command == "sweep":
        if cfg.scenario != "sweep":
            print("config error: 'sweep' requires scenario: sweep", file=sys.stderr)
            return EXIT_CONFIG
        result = run_sweep(cfg, seed=args.seed)
        summary = write_sweep(result, args.out)
        _print_summary(summary)
        return EXIT_OK

    # run
    if cfg.scenario == "sweep":
        print("config error: use the 'sweep' subcommand for sweep configs", file=sys.stderr)
        return EXIT_CONFIG
    seed = cfg.seed if args.seed is None else args.seed
    try:
        if cfg.scenario == "single_robot":
            log = run_single_robot(cfg, seed=seed)
        else:
            log = run_intersection(cfg, seed=seed)
    except InitializationError as exc:
        log = EpisodeLog(
            scenario=cfg.scenario, seed=seed, config_hash=cfg.config_hash(),
            status=Status.INIT_FAILED, meta={"error": str(exc)},
        )
        write_episode(log, args.out)
        print(f"initialization failed: {exc}", file=sys.stderr)
        return EXIT_SAFETY
    except InvariantViolationError as exc:
        print(f"safety chain violated: {exc}", file=sys.stderr)
        return EXIT_SAFETY

    summary = write_episode(log, args.out)
    _print_summary(summary)
    return EXIT_SAFETY if log.status is Status.FAILURE_ENTERED else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
