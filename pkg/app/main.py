"""Command-line entry point: ``python -m app.main <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from pydantic import ValidationError

from app.commands import faults, models, run, snn, trigger, trojan
from app.commands.base import execute, global_options
from app.config import settings
from app.errors import NeuroAttackError
from app.log import configure_logging

EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neuroattack", description="Bit-flip and trigger attacks on DNNs and SNNs")
    global_options(parser)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for group in (models, faults, trigger, trojan, snn, run):
        group.register(subparsers)
    return parser


def _one_line(exc: Exception) -> str:
    if isinstance(exc, ValidationError):
        parts = ["{}: {}".format(".".join(str(x) for x in err["loc"]) or "config", err["msg"]) for err in exc.errors()]
        return "invalid configuration: " + "; ".join(parts)
    return " ".join(str(exc).split())


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or settings.log_level)
    try:
        execute(args)
    except (NeuroAttackError, ValidationError) as e:
        sys.stderr.write(f"error: {_one_line(e)}\n")
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
