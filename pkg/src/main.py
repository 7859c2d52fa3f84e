"""
Main entry point for the photon blockade simulator CLI.
"""

import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from commands import register_all
from errors import ConfigurationError, SimulationError
from sim_config import ExitCode
from utils import setup_logging

logger = logging.getLogger(__name__)


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with ExitCode.USAGE."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(ExitCode.USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> CliParser:
    parser = CliParser(prog="blockade", description="Photon blockade and HBT simulator")
    parser.add_argument("--log-level", help="Override BLOCKADE_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="subcommand", metavar="COMMAND", parser_class=CliParser)
    subparsers.required = True
    register_all(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one sub-command and return the process exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        args.handler(args)
    except (ConfigurationError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return ExitCode.USAGE
    except SimulationError as e:
        logger.error(f"Numerical failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return ExitCode.NUMERICAL
    return ExitCode.OK


if __name__ == "__main__":
    sys.exit(main())
