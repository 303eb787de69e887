"""Mini-batch SGD with momentum and step learning-rate decay."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from app.errors import InputError, NumericError, TrainingError
from app.log import progress_enabled
from app.nn.network import Network, evaluate_accuracy, loss_and_grads

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(30, ge=0)
    batch_size: int = Field(64, ge=1)
    lr: float = Field(0.01, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    lr_decay: float = Field(0.5, gt=0, le=1)
    decay_every: int = Field(10, ge=1)
    seed: int = 0


@dataclass
class TrainResult:
    network: Network
    test_accuracy: List[float]
    train_loss: List[float]


def train(
    net: Network,
    train_images: np.ndarray,
    train_labels: np.ndarray,
    test_images: np.ndarray,
    test_labels: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
) -> TrainResult:
    """
    Train a copy of ``net`` and record test accuracy after every epoch.

    Deterministic for a fixed ``cfg.seed``: the generator drives both the
    per-epoch shuffle and the dropout masks.

    Raises:
        InputError: on an empty training set.
        TrainingError: when the loss stops being finite, with the epoch index.
    """
    if len(train_images) == 0:
        raise InputError("training set is empty")
    model = net.copy()
    if cfg.epochs == 0:
        return TrainResult(network=model, test_accuracy=[], train_loss=[])

    rng = np.random.default_rng(cfg.seed)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    history: List[float] = []
    losses: List[float] = []
    n = len(train_images)

    for epoch in range(cfg.epochs):
        lr = cfg.lr * cfg.lr_decay ** (epoch // cfg.decay_every)
        order = rng.permutation(n)
        running = 0.0
        batches = range(0, n, cfg.batch_size)
        for start in tqdm(batches, desc=f"epoch {epoch + 1}/{cfg.epochs}", leave=False, disable=not progress_enabled()):
            idx = order[start:start + cfg.batch_size]
            try:
                value, grads = loss_and_grads(model, train_images[idx], train_labels[idx], training=True, rng=rng)
            except NumericError as e:
                raise TrainingError(f"training diverged in epoch {epoch}: {e}", epoch=epoch) from e
            if not np.isfinite(value):
                raise TrainingError(f"loss became {value} in epoch {epoch}", epoch=epoch)
            running += value * len(idx)
            for name, g in grads.items():
                v = velocity[name]
                v *= cfg.momentum
                v -= lr * g
                model.params[name] += v
        epoch_loss = running / n
        acc = evaluate_accuracy(model, test_images, test_labels)
        losses.append(epoch_loss)
        history.append(acc)
        logger.info("epoch %d/%d lr=%.5f loss=%.4f test_acc=%.4f", epoch + 1, cfg.epochs, lr, epoch_loss, acc)

    return TrainResult(network=model, test_accuracy=history, train_loss=losses)
