"""`flip-sweep` and `flip-search`."""

from __future__ import annotations

import argparse
from typing import Any, Dict

from app.commands.base import add_data_options, add_option, global_parent
from app.faultlab.sweep import P_MAX, default_probabilities


def _probabilities(args: argparse.Namespace, doc: Dict[str, Any]) -> None:
    if args.points is not None or args.p_max is not None:
        sweep = doc.setdefault("sweep", {})
        sweep["probabilities"] = default_probabilities(args.points or 20, P_MAX if args.p_max is None else args.p_max)


def register(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("flip-sweep", parents=[global_parent()], help="accuracy under random bit flips")
    add_data_options(p)
    add_option(p, "--net", "net", required=True, help="quantized (or float) checkpoint")
    add_option(p, ("--iters", "--iterations"), "sweep.iterations", type=int)
    p.add_argument("--points", type=int, default=None, help="probabilities evenly spaced from 0")
    p.add_argument("--pmax", "--p-max", dest="p_max", type=float, default=None, help="largest flip probability")
    p.set_defaults(experiment="sweep", adjust=_probabilities)

    p = subparsers.add_parser("flip-search", parents=[global_parent()], help="greedy gradient-search bit flips")
    add_data_options(p)
    add_option(p, "--net", "net", required=True)
    add_option(p, "--max-flips", "search.max_flips", type=int)
    add_option(p, "--attack-batch", "search.attack_batch", type=int)
    p.set_defaults(experiment="search")
