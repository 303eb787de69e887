"""`snn-eval`."""

from __future__ import annotations

import argparse

from app.commands.base import add_data_options, add_option, global_parent


def register(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("snn-eval", parents=[global_parent()], help="convert to a rate-coded SNN and compare")
    add_data_options(p)
    add_option(p, "--net", "net", required=True)
    add_option(p, "--trigger", "trigger_path", help="artifact naming the target neuron and threshold")
    add_option(p, "--layer", "snn.layer_index", type=int, help="target layer when no trigger is given")
    add_option(p, "--timesteps", "snn.lif.timesteps", type=int)
    add_option(p, "--tau-m", "snn.lif.tau_m", type=float)
    add_option(p, "--percentile", "snn.percentile", type=float)
    add_option(p, ("--calib", "--calibration"), "snn.calibration", type=int)
    add_option(p, "--eval-images", "snn.eval_images", type=int)
    p.set_defaults(experiment="snn")
