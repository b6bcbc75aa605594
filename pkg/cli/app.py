"""
Command-line front end: argument parsing, dispatch and exit codes.

Exit codes: 0 success, 2 configuration or argument error, 3 numerical
failure, 4 infeasible calibration.
"""

from collections.abc import Sequence
from typing import Optional
import argparse
import logging
import sys

from engine.model import NumericalDomainError

from . import analysis_cmd, calibrate_cmd, simulate_cmd, sweep_cmd
from .calibrate_cmd import CalibrationInfeasible
from .common import default_jobs, positive_int
from .status_log import LEVELS, configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_INFEASIBLE = 4

COMMAND_MODULES = (simulate_cmd, sweep_cmd, calibrate_cmd, analysis_cmd)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="configuration file (.ini or .zarr)")
    common.add_argument("--overlay", action="append", default=[],
                        help="overlay file merged on top of the configuration (repeatable)")
    common.add_argument("--verbosity", choices=LEVELS, default="INFO")
    common.add_argument("--jobs", type=positive_int, default=None,
                        help="worker processes (default: $FDMQKD_JOBS or 1)")
    common.add_argument("--seed", type=int, default=0, help="master seed")

    parser = argparse.ArgumentParser(prog="fdm-qkd",
                                     description="FDM CV-QKD waveform simulator and key-rate engine")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in COMMAND_MODULES:
        module.register(subparsers, common)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    configure_logging(args.verbosity)
    try:
        if args.jobs is None:
            args.jobs = default_jobs()
        return args.func(args)
    except CalibrationInfeasible as e:
        logger.error(str(e))
        return EXIT_INFEASIBLE
    except (NumericalDomainError, FloatingPointError) as e:
        logger.error(f"numerical failure: {e}")
        return EXIT_NUMERICAL
    except (ValueError, FileNotFoundError, ImportError) as e:
        logger.error(str(e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
