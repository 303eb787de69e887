"""Greedy gradient-search bit-flip attack.

Each step ranks every unmasked code by the magnitude of the loss gradient of
its dequantized value, tries the eight bit flips of the top element and keeps
the one that raises the attack-batch loss the most. The element is then masked
for the rest of the search.
"""

from __future__ import annotations

import logging
from typing import List, Optional, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from app.errors import InputError
from app.log import progress_enabled
from app.nn.network import evaluate_accuracy, grad_wrt_params, loss
from app.quant.quantize import BitFlip, QuantizedNetwork, apply_bitflip

logger = logging.getLogger(__name__)


class SearchConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_flips: int = Field(30, ge=1)
    attack_batch: int = Field(256, ge=1)


class AttackTrace(BaseModel):
    """
    Ordered flips plus the curves they produce.

    ``accuracy[k]`` and ``loss[k]`` are measured after ``k`` flips, so both
    curves are one longer than ``flips``. Serialized, the trace is also a
    valid FaultPlan file (its ``flips`` key).
    """

    flips: List[BitFlip] = Field(default_factory=list)
    accuracy: List[float]
    loss: List[float]
    truncated: bool = False

    @model_validator(mode="after")
    def _check_curves(self) -> "AttackTrace":
        if len(self.accuracy) != len(self.flips) + 1 or len(self.loss) != len(self.flips) + 1:
            raise ValueError("accuracy and loss curves must have one entry per flip plus the clean entry")
        return self

    @property
    def clean_accuracy(self) -> float:
        return self.accuracy[0]

    @property
    def masked(self) -> Set[Tuple[str, int]]:
        return {(f.param_id, f.flat_index) for f in self.flips}


def _top_element(grads: dict, masked: Set[Tuple[str, int]]) -> Optional[Tuple[str, int, float]]:
    """Largest |gradient| among unmasked elements; ties go to the lowest (param_id, flat_index)."""
    best: Optional[Tuple[str, int, float]] = None
    for name in sorted(grads):
        score = np.abs(grads[name].astype(np.float64)).reshape(-1)
        hidden = [idx for (pid, idx) in masked if pid == name]
        if hidden:
            score = score.copy()
            score[hidden] = -1.0
        idx = int(np.argmax(score))
        if score[idx] < 0:
            continue
        if best is None or score[idx] > best[2]:
            best = (name, idx, float(score[idx]))
    return best


def best_bit(
    qnet: QuantizedNetwork,
    param_id: str,
    flat_index: int,
    images: np.ndarray,
    labels: np.ndarray,
    batch_size: int = 1000,
) -> Tuple[BitFlip, float]:
    """The bit of one element whose flip maximizes the loss; ties go to the lower bit."""
    chosen: Optional[Tuple[BitFlip, float]] = None
    for bit in range(8):
        flip = BitFlip(param_id=param_id, flat_index=flat_index, bit=bit)
        value = loss(apply_bitflip(qnet, flip).network(), images, labels, batch_size)
        if chosen is None or value > chosen[1]:
            chosen = (flip, value)
    assert chosen is not None
    return chosen


def gradient_search_attack(
    qnet: QuantizedNetwork,
    attack_images: np.ndarray,
    attack_labels: np.ndarray,
    max_flips: int = 30,
    test_images: Optional[np.ndarray] = None,
    test_labels: Optional[np.ndarray] = None,
    batch_size: int = 1000,
) -> AttackTrace:
    """
    Run the greedy search for ``max_flips`` steps.

    Gradients are recomputed on the already-flipped network at every step.
    Accuracy is recorded on the test set after each accepted flip (on the
    attack batch when no test set is given).

    Raises:
        InputError: on an empty attack batch or ``max_flips < 1``.
    """
    if len(attack_images) == 0:
        raise InputError("gradient_search_attack needs a non-empty attack batch")
    if max_flips < 1:
        raise InputError("max_flips must be at least 1")
    if test_images is None or test_labels is None:
        test_images, test_labels = attack_images, attack_labels

    current = qnet
    masked: Set[Tuple[str, int]] = set()
    flips: List[BitFlip] = []
    accuracy = [evaluate_accuracy(current.network(), test_images, test_labels, batch_size)]
    losses = [loss(current.network(), attack_images, attack_labels, batch_size)]
    truncated = False

    for step in tqdm(range(max_flips), desc="bit search", disable=not progress_enabled()):
        grads = grad_wrt_params(current.network(), attack_images, attack_labels)
        top = _top_element(grads, masked)
        if top is None:
            truncated = True
            logger.warning("every parameter element is masked after %d flips; trace truncated", step)
            break
        name, idx, score = top
        flip, value = best_bit(current, name, idx, attack_images, attack_labels, batch_size)
        current = apply_bitflip(current, flip)
        masked.add((name, idx))
        flips.append(flip)
        losses.append(value)
        accuracy.append(evaluate_accuracy(current.network(), test_images, test_labels, batch_size))
        logger.info(
            "flip %d: %s[%d] bit %d |grad|=%.3g loss=%.4f acc=%.4f",
            step + 1, name, idx, flip.bit, score, value, accuracy[-1],
        )
    return AttackTrace(flips=flips, accuracy=accuracy, loss=losses, truncated=truncated)
