"""Statistical random bit-flip sweep over the quantized parameters."""

from __future__ import annotations

import logging
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from app.errors import InputError
from app.log import progress_enabled
from app.nn.network import evaluate_accuracy
from app.quant.quantize import QuantizedNetwork

logger = logging.getLogger(__name__)

P_MAX = 0.95


def default_probabilities(points: int = 20, p_max: float = P_MAX) -> List[float]:
    return [round(float(p), 12) for p in np.linspace(0.0, p_max, points)]


class SweepConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    probabilities: List[float] = Field(default_factory=default_probabilities, min_length=1)
    iterations: int = Field(5, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_probabilities(self) -> "SweepConfig":
        if any(p < 0 or p > P_MAX for p in self.probabilities):
            raise ValueError(f"probabilities must lie in [0, {P_MAX}]")
        if list(self.probabilities) != sorted(self.probabilities):
            raise ValueError("probabilities must be sorted ascending")
        return self


class SweepPoint(BaseModel):
    probability: float
    accuracies: List[float]
    bits_flipped: List[int]
    mean_accuracy: float
    mean_bits_flipped: float


class SweepResult(BaseModel):
    baseline_accuracy: float
    total_elements: int
    points: List[SweepPoint]

    def rows(self) -> List[Tuple[float, int, int, float]]:
        """(probability, iteration, bits_flipped, accuracy) rows for the CSV report."""
        return [
            (pt.probability, it, bits, acc)
            for pt in self.points
            for it, (bits, acc) in enumerate(zip(pt.bits_flipped, pt.accuracies))
        ]


def flip_random_bits(qnet: QuantizedNetwork, p: float, rng: np.random.Generator) -> Tuple[QuantizedNetwork, int]:
    """
    Select every code independently with probability ``p`` and flip one
    uniformly random bit of each selected code.

    Returns:
        (faulted network, number of bits flipped)
    """
    updates: Dict[str, np.ndarray] = {}
    flipped = 0
    for name in qnet.parameter_names():
        codes = qnet.codes(name)
        selected = np.flatnonzero(rng.random(codes.size) < p)
        if selected.size == 0:
            continue
        bits = rng.integers(0, 8, size=selected.size)
        new = codes.copy()
        raw = new.reshape(-1).view(np.uint8)
        raw[selected] ^= np.left_shift(1, bits).astype(np.uint8)
        updates[name] = new
        flipped += int(selected.size)
    if not updates:
        return qnet, 0
    return qnet.with_codes(updates), flipped


def random_flip_sweep(
    qnet: QuantizedNetwork,
    images: np.ndarray,
    labels: np.ndarray,
    cfg: SweepConfig = SweepConfig(),
    batch_size: int = 1000,
) -> SweepResult:
    """
    Accuracy of ``qnet`` under random bit flips, for each probability and iteration.

    Each (probability, iteration) pair draws from its own generator seeded by
    ``(cfg.seed, point, iteration)``, so points are independent and any subset
    can be recomputed alone. Flips never accumulate across points.

    Raises:
        InputError: on an empty test set.
    """
    if len(images) == 0:
        raise InputError("random_flip_sweep needs a non-empty test set")
    baseline = evaluate_accuracy(qnet.network(), images, labels, batch_size)
    logger.info("sweep baseline accuracy %.4f over %d parameters", baseline, qnet.total_elements())

    points: List[SweepPoint] = []
    for point, p in enumerate(tqdm(cfg.probabilities, desc="flip sweep", disable=not progress_enabled())):
        accs: List[float] = []
        counts: List[int] = []
        for it in range(cfg.iterations):
            rng = np.random.default_rng([cfg.seed, point, it])
            faulted, flipped = flip_random_bits(qnet, p, rng)
            acc = baseline if flipped == 0 else evaluate_accuracy(faulted.network(), images, labels, batch_size)
            accs.append(acc)
            counts.append(flipped)
        points.append(
            SweepPoint(
                probability=p,
                accuracies=accs,
                bits_flipped=counts,
                mean_accuracy=float(np.mean(accs)),
                mean_bits_flipped=float(np.mean(counts)),
            )
        )
        logger.info("p=%.4f mean_acc=%.4f mean_bits=%.1f", p, points[-1].mean_accuracy, points[-1].mean_bits_flipped)
    return SweepResult(baseline_accuracy=baseline, total_elements=qnet.total_elements(), points=points)
