"""`trojan-eval` and `overhead`."""

from __future__ import annotations

import argparse

from app.commands.base import add_data_options, add_option, global_parent


def register(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("trojan-eval", parents=[global_parent()], help="armed inference on clean and triggered tests")
    add_data_options(p)
    add_option(p, "--net", "net", required=True)
    add_option(p, "--trigger", "trigger_path", required=True)
    add_option(p, "--faults", "faults_path", required=True, help="fault plan or flip-search trace")
    add_option(p, "--mode", "trojan.mode", choices=["dnn", "snn"])
    add_option(p, "--timesteps", "snn.lif.timesteps", type=int, help="spiking window T (snn mode)")
    add_option(p, ("--calib", "--calibration"), "snn.calibration", type=int)
    p.set_defaults(experiment="trojan")

    p = subparsers.add_parser("overhead", parents=[global_parent()], help="transistor count of the Trojan")
    add_option(p, "--flips", "overhead.flips", type=int)
    add_option(p, ("--mode", "--domain"), "overhead.domain", choices=["dnn", "snn"])
    add_option(p, "--counter-modulus", "overhead.counter_modulus", type=int)
    add_option(p, "--timesteps", "overhead.timesteps", type=int)
    add_option(p, "--out", "out")
    p.set_defaults(experiment="overhead")
