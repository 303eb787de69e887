"""`trigger-gen`, `trigger-eval` and `trigger-size-sweep`."""

from __future__ import annotations

import argparse

from app.commands.base import add_data_options, add_option, global_parent


def _loop_options(p: argparse.ArgumentParser, section: str) -> None:
    add_option(p, "--layer", f"{section}.layer_index", type=int, help="layer index of the target neuron")
    add_option(p, "--mode", f"{section}.loop.mode", choices=["stamp", "noise"])
    add_option(p, "--epochs", f"{section}.loop.epochs", type=int)
    add_option(p, "--lr", f"{section}.loop.lr", type=float)
    add_option(p, ("--valmin", "--val-min"), f"{section}.loop.val_min", type=float)
    add_option(p, ("--valmax", "--val-max"), f"{section}.loop.val_max", type=float)
    add_option(p, "--target-output", f"{section}.loop.target_output", type=float)
    add_option(p, "--th", f"{section}.loop.th", type=float, help="stopping cost (default: 1%% of the initial cost)")
    add_option(p, "--xi", f"{section}.loop.xi", type=float)


def register(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("trigger-gen", parents=[global_parent()], help="synthesize a trigger")
    add_option(p, "--net", "net", required=True)
    add_option(p, "--mask", "trigger.mask", help="'gradient' or 'square:SIDE[,CORNER]'")
    add_option(p, "--out", "out", help="artifact file name")
    _loop_options(p, "trigger")
    p.set_defaults(experiment="trigger")

    p = subparsers.add_parser("trigger-eval", parents=[global_parent()], help="exceed counts of a trigger")
    add_data_options(p)
    add_option(p, "--net", "net", required=True)
    add_option(p, "--trigger", "trigger_path", required=True)
    p.set_defaults(experiment="trigger-eval")

    p = subparsers.add_parser("trigger-size-sweep", parents=[global_parent()], help="square triggers of growing side")
    add_data_options(p)
    add_option(p, "--net", "net", required=True)
    add_option(p, "--sides", "trigger_size.sides", type=int, nargs="+")
    add_option(p, "--corner", "trigger_size.corner",
               choices=["top-left", "top-right", "bottom-left", "bottom-right", "center"])
    _loop_options(p, "trigger_size")
    p.set_defaults(experiment="trigger-size")
