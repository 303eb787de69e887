"""`run`: execute a config file as it is."""

from __future__ import annotations

import argparse

from app.commands.base import global_parent


def register(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("run", parents=[global_parent()], help="run the experiment described by --config")
    p.add_argument("config_file", nargs="?", default=None, help="config JSON (same as --config)")
    p.set_defaults(experiment=None)
