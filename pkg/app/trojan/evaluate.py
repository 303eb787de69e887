"""End-to-end evaluation of an armed Trojan against clean and trigger-bearing test sets."""

from __future__ import annotations

import logging
from typing import List, Optional

import numpy as np
from pydantic import BaseModel

from app.errors import ConfigurationError, InputError
from app.nn.network import evaluate_accuracy, predict
from app.quant.quantize import QuantizedNetwork
from app.snn.convert import SpikingNetwork
from app.trigger.generate import TriggerArtifact
from app.trigger.metrics import StealthCriteria, apply_trigger
from app.trojan.detector import AnalogDetector, TrojanConfig, armed_predict

logger = logging.getLogger(__name__)


class AttackReport(BaseModel):
    detector: str
    flips: int
    dim: int
    baseline_acc: float
    clean_acc: float
    triggered_acc: float
    exceed_original: int
    exceed_modified: int
    rho: int
    false_trigger_rate: float
    conditions: List[bool]
    stealth_identical: bool

    @property
    def stealthy(self) -> bool:
        return all(self.conditions)


def end_to_end_eval(
    qnet: QuantizedNetwork,
    cfg: TrojanConfig,
    artifact: TriggerArtifact,
    images: np.ndarray,
    labels: np.ndarray,
    snet: Optional[SpikingNetwork] = None,
    criteria: StealthCriteria = StealthCriteria(),
    batch_size: int = 1000,
) -> AttackReport:
    """
    Run armed inference on the clean test set and on its triggered copy.

    ``stealth_identical`` is true when every untriggered clean image got
    exactly the label of the unarmed network.

    Raises:
        ConfigurationError: if the detector and the artifact observe different neurons.
        InputError: on an empty test set.
    """
    if cfg.detector.target != artifact.target:
        raise ConfigurationError(
            f"detector target {cfg.detector.target.model_dump()} != artifact target {artifact.target.model_dump()}"
        )
    if len(images) == 0:
        raise InputError("end_to_end_eval needs a non-empty test set")
    y = np.asarray(labels)
    baseline = evaluate_accuracy(qnet.network(), images, y, batch_size)
    clean = armed_predict(qnet, cfg, images, snet, batch_size)
    modified = armed_predict(qnet, cfg, apply_trigger(images, artifact), snet, batch_size)

    dim = len(images)
    original_n = int(clean.triggered.sum())
    modified_n = int(modified.triggered.sum())
    quiet = ~clean.triggered
    if isinstance(cfg.detector, AnalogDetector):
        reference = predict(qnet.network(), images, batch_size)
    else:
        reference = clean.clean_labels
    report = AttackReport(
        detector=cfg.detector.kind,
        flips=len(cfg.fault_plan),
        dim=dim,
        baseline_acc=baseline,
        clean_acc=float((clean.labels == y).mean()),
        triggered_acc=float((modified.labels == y).mean()),
        exceed_original=original_n,
        exceed_modified=modified_n,
        rho=modified_n - original_n,
        false_trigger_rate=original_n / dim,
        conditions=criteria.check(original_n, modified_n, dim),
        stealth_identical=bool(np.array_equal(clean.labels[quiet], reference[quiet])),
    )
    if not report.stealthy:
        logger.warning("stealth conditions violated: %s", report.conditions)
    logger.info(
        "trojan %s: baseline=%.4f clean=%.4f triggered=%.4f rho=%d",
        report.detector, baseline, report.clean_acc, report.triggered_acc, report.rho,
    )
    return report


def analog_detector(artifact: TriggerArtifact) -> AnalogDetector:
    """Comparator armed at the artifact's calibrated threshold."""
    return AnalogDetector(target=artifact.target, threshold=artifact.threshold)
