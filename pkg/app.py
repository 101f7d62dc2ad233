"""
Command-line entry point.

    agsmooth run --config experiment.yaml [--seed S] [--out DIR]
    agsmooth verify [--level fast|full]
    agsmooth compare --configs a.yaml b.yaml --out DIR [--jobs N]

Exit codes: 0 success, 1 invalid configuration (or failed verification),
2 runtime abort or I/O failure.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from ags.exceptions import RunAborted
from harness.experiment_config import ConfigParseError, ConfigValidationError, HarnessIOError, load_config
from harness.experiment_runner import compare_experiments, run_experiment
from harness.verify_suite import BUDGETS, verify_suite

logger = logging.getLogger("agsmooth")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ABORTED = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agsmooth", description="Anisotropic Gaussian smoothing experiments")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    run_cmd = commands.add_parser("run", help="run one experiment configuration")
    run_cmd.add_argument("--config", required=True, help="JSON or YAML experiment file")
    run_cmd.add_argument("--seed", type=int, help="override the configured master seed")
    run_cmd.add_argument("--out", help="output directory (default: config output, $AGS_OUT_DIR, out/)")

    verify_cmd = commands.add_parser("verify", help="check every module invariant numerically")
    verify_cmd.add_argument("--level", default="fast", choices=sorted(BUDGETS))

    compare_cmd = commands.add_parser("compare", help="run several configurations into one table")
    compare_cmd.add_argument("--configs", nargs="+", required=True)
    compare_cmd.add_argument("--out", required=True)
    compare_cmd.add_argument("--jobs", type=int, default=1)
    return parser


def _run(args) -> int:
    summary = run_experiment(load_config(args.config), out_dir=args.out, seed=args.seed)
    print(json.dumps({k: v for k, v in summary.items() if k != "config"}, indent=2))
    return EXIT_ABORTED if summary["aborted"] else EXIT_OK


def _verify(args) -> int:
    report = verify_suite(args.level)
    print(json.dumps(report, indent=2))
    failed = [r["name"] for r in report["results"] if not r["passed"]]
    if failed:
        logger.error("%d invariant(s) failed: %s", len(failed), ", ".join(failed))
        return EXIT_INVALID
    return EXIT_OK


def _compare(args) -> int:
    merged = compare_experiments(args.configs, args.out, jobs=args.jobs)
    aborted = merged.attrs.get("aborted", [])
    if aborted:
        logger.warning("aborted runs: %s", ", ".join(aborted))
        return EXIT_ABORTED
    return EXIT_OK


COMMANDS = {"run": _run, "verify": _verify, "compare": _compare}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigParseError, ConfigValidationError) as e:
        logger.error("invalid configuration: %s", e)
        return EXIT_INVALID
    except (HarnessIOError, RunAborted) as e:
        logger.error("%s", e)
        return EXIT_ABORTED


if __name__ == "__main__":
    sys.exit(main())
