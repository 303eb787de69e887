"""Trigger application and the exceed / rho / S statistics."""

from __future__ import annotations

import logging
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.errors import ConfigurationError, InputError
from app.nn.network import Network, grad_wrt_input
from app.trigger.cost import TriggerCost, snapshot_outputs
from app.trigger.generate import TriggerArtifact
from app.trigger.target import TargetNeuron, target_activations

logger = logging.getLogger(__name__)


def apply_trigger(images: np.ndarray, artifact: TriggerArtifact) -> np.ndarray:
    """
    Stamp or add the trigger to one image or a batch of images.

    Raises:
        InputError: if the image shape differs from the trigger shape.
    """
    x = np.asarray(images, dtype=np.float32)
    shape = artifact.trigger.shape
    if x.shape != shape and x.shape[1:] != shape:
        raise InputError(f"image shape {x.shape} does not match trigger shape {shape}")
    m = artifact.mask
    if artifact.mode == "stamp":
        return x * (1 - m) + artifact.trigger * m
    return np.clip(x + artifact.trigger * m, 0.0, 1.0)


def compute_s(net: Network, target: TargetNeuron, artifact: TriggerArtifact) -> float:
    """
    Mean |d cost / d pixel| over the mask, at the artifact's initial image.

    For a square mask of side M this is the sum over the mask divided by M^2;
    other masks divide by their pixel count.

    Raises:
        InputError: on an empty mask.
    """
    area = artifact.mask_area
    if area == 0:
        raise InputError("cannot compute S over an empty mask")
    outputs = snapshot_outputs(net, artifact.initial_image, target)
    objective = TriggerCost(target, artifact.target_output, outputs)
    gamma = np.abs(grad_wrt_input(net, artifact.initial_image, objective).astype(np.float64))
    return float(gamma[artifact.mask > 0].sum() / area)


class StealthCriteria(BaseModel):
    """Quantitative form of the three stealth conditions."""

    model_config = ConfigDict(extra="forbid")

    ratio_margin: float = Field(0.1, ge=0)
    false_trigger_max: float = Field(0.01, ge=0, le=1)
    coverage_min: float = Field(0.95, ge=0, le=1)

    def check(self, exceed_original: int, exceed_modified: int, dim: int) -> List[bool]:
        return [
            exceed_original <= self.ratio_margin * exceed_modified,
            exceed_original <= self.false_trigger_max * dim,
            exceed_modified >= self.coverage_min * dim,
        ]


class ExceedReport(BaseModel):
    exceed_original: int
    exceed_modified: int
    rho: int
    dim: int
    threshold: float
    conditions: List[bool]

    @property
    def stealthy(self) -> bool:
        return all(self.conditions)


def evaluate_exceed(
    net: Network,
    artifact: TriggerArtifact,
    images: np.ndarray,
    criteria: StealthCriteria = StealthCriteria(),
    batch_size: int = 1000,
) -> ExceedReport:
    """
    Count images whose target activation is strictly above the threshold, on
    the clean set and on the trigger-bearing set.

    Raises:
        ConfigurationError: if the artifact's target does not exist in ``net``.
    """
    if artifact.target.layer_index >= len(net.layers):
        raise ConfigurationError(f"artifact target layer {artifact.target.layer_index} is not in this network")
    clean = target_activations(net, images, artifact.target, batch_size)
    modified = target_activations(net, apply_trigger(images, artifact), artifact.target, batch_size)
    original_n = int(np.count_nonzero(clean > artifact.threshold))
    modified_n = int(np.count_nonzero(modified > artifact.threshold))
    dim = len(images)
    report = ExceedReport(
        exceed_original=original_n,
        exceed_modified=modified_n,
        rho=modified_n - original_n,
        dim=dim,
        threshold=artifact.threshold,
        conditions=criteria.check(original_n, modified_n, dim),
    )
    logger.info("exceed original=%d modified=%d rho=%d of %d", original_n, modified_n, report.rho, dim)
    return report
