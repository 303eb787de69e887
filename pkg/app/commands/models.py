"""`train` and `quantize`."""

from __future__ import annotations

import argparse

from app.commands.base import add_data_options, add_option, global_parent


def register(subparsers: argparse._SubParsersAction) -> None:
    p = subparsers.add_parser("train", parents=[global_parent()], help="train a float network")
    add_data_options(p)
    add_option(p, "--arch", "arch", choices=["mlp", "lenet", "cifar_cnn"])
    add_option(p, "--init", "net", help="start from this checkpoint instead of a fresh network")
    add_option(p, "--epochs", "train.epochs", type=int)
    add_option(p, "--batch-size", "train.batch_size", type=int)
    add_option(p, "--lr", "train.lr", type=float)
    add_option(p, "--momentum", "train.momentum", type=float)
    p.set_defaults(experiment="train")

    p = subparsers.add_parser("quantize", parents=[global_parent()], help="int8-quantize a trained network")
    add_data_options(p)
    add_option(p, "--net", "net", required=True, help="float checkpoint")
    p.set_defaults(experiment="quantize")
