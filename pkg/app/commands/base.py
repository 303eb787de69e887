"""Shared plumbing of the subcommands.

Every option that maps onto the ExperimentConfig document is declared with
``add_option``: its dest carries the dotted config path, so ``overrides``
can rebuild the nested override document without a per-command table.
"""

from __future__ import annotations

import argparse
import sys
from typing import Any, Callable, Dict, Optional, Sequence, Union

from app.experiments.runner import RunSummary, run_experiment
from app.experiments.schemas import load_experiment_config

_PREFIX = "set:"

Adjust = Callable[[argparse.Namespace, Dict[str, Any]], None]


def global_options(parser: argparse.ArgumentParser, *, suppress: bool = False) -> None:
    """
    Options accepted both before and after the subcommand name.

    Subparsers register them with SUPPRESS defaults so a value given before
    the subcommand is not reset.
    """
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="experiment config JSON (default: NEUROATTACK_CONFIG)")
    parser.add_argument("--seed", type=int, default=default, help="run seed")
    parser.add_argument("--out-dir", dest="out_dir", default=default, help="output directory (default: NEUROATTACK_OUT_DIR)")
    parser.add_argument("--log-level", dest="log_level", default=default, help="DEBUG, INFO, WARNING or ERROR")


def global_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    global_options(parent, suppress=True)
    return parent


def add_option(parser: argparse.ArgumentParser, flag: Union[str, Sequence[str]], path: str, **kwargs: Any) -> None:
    """Register one option (or several spellings of it) writing to the dotted config ``path``."""
    flags = (flag,) if isinstance(flag, str) else tuple(flag)
    parser.add_argument(*flags, dest=_PREFIX + path, default=None, **kwargs)


def add_data_options(parser: argparse.ArgumentParser) -> None:
    add_option(parser, "--dataset", "dataset", choices=["mnist", "cifar10"])
    add_option(parser, "--data-root", "data_root", help="dataset root (default: NEUROATTACK_DATA_ROOT)")
    add_option(parser, "--test-limit", "test_limit", type=int, help="evaluate on the first N test images")
    add_option(parser, "--out", "out", help="primary output file name")


def _put(doc: Dict[str, Any], path: str, value: Any) -> None:
    *parents, leaf = path.split(".")
    node = doc
    for key in parents:
        node = node.setdefault(key, {})
    node[leaf] = value


def overrides(args: argparse.Namespace) -> Dict[str, Any]:
    doc: Dict[str, Any] = {}
    if getattr(args, "experiment", None):
        doc["experiment"] = args.experiment
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    if getattr(args, "out_dir", None):
        doc["out_dir"] = args.out_dir
    for dest, value in vars(args).items():
        if dest.startswith(_PREFIX) and value is not None:
            _put(doc, dest[len(_PREFIX):], value)
    adjust: Optional[Adjust] = getattr(args, "adjust", None)
    if adjust is not None:
        adjust(args, doc)
    return doc


def execute(args: argparse.Namespace) -> RunSummary:
    """Build the config of the chosen subcommand, run it and list the written files on stdout."""
    path = getattr(args, "config_file", None) or getattr(args, "config", None)
    cfg = load_experiment_config(path, overrides(args))
    summary = run_experiment(cfg)
    for path in summary.outputs:
        sys.stdout.write(path + "\n")
    return summary
