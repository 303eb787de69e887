"""Behavioral model of the armed hardware Trojan.

The comparator always observes the clean network. Only when its observable
is strictly above the threshold does the inference run again with the
fault plan selected by the multiplexers; the stored network is never touched.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

from app.errors import ConfigurationError, InputError
from app.nn.network import Network, channel_major, check_batch, forward, predict
from app.quant.faultplan import apply_fault_plan, validate_fault_plan
from app.quant.quantize import BitFlip, QuantizedNetwork
from app.snn.convert import SpikingNetwork, simulate
from app.trigger.target import TargetNeuron, check_target

logger = logging.getLogger(__name__)


class AnalogDetector(BaseModel):
    """Comparator on the target neuron's activation. ``+inf`` disarms it."""

    kind: Literal["analog"] = "analog"
    target: TargetNeuron
    threshold: float

    @field_validator("threshold")
    @classmethod
    def _not_nan(cls, v: float) -> float:
        if math.isnan(v):
            raise ValueError("threshold must not be NaN")
        return v


class SpikingDetector(BaseModel):
    """Spike counter on the target neuron, cleared after every input window."""

    kind: Literal["spiking"] = "spiking"
    target: TargetNeuron
    count_threshold: int = Field(..., ge=0)
    window: int = Field(50, ge=1)


Detector = Annotated[Union[AnalogDetector, SpikingDetector], Field(discriminator="kind")]


class TrojanConfig(BaseModel):
    fault_plan: List[BitFlip] = Field(..., min_length=1)
    detector: Detector


@dataclass
class ArmedResult:
    labels: np.ndarray
    triggered: np.ndarray
    observable: np.ndarray
    clean_labels: np.ndarray


def _check_detector_target(net: Network, detector: Union[AnalogDetector, SpikingDetector]) -> None:
    try:
        check_target(net, detector.target)
    except InputError as e:
        raise ConfigurationError(f"detector target is not part of the network: {e}") from e


def _analog_pass(net: Network, x: np.ndarray, detector: AnalogDetector, batch_size: int) -> Tuple[np.ndarray, np.ndarray]:
    labels, observed = [], []
    idx, neuron = detector.target.layer_index, detector.target.neuron_index
    for start in range(0, len(x), batch_size):
        logits, acts = forward(net, x[start:start + batch_size], record=True)
        labels.append(logits.argmax(axis=1))
        observed.append(channel_major(acts[idx])[:, neuron])
    if not labels:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=net.dtype)
    return np.concatenate(labels), np.concatenate(observed)


def armed_predict(
    qnet: QuantizedNetwork,
    cfg: TrojanConfig,
    images: np.ndarray,
    snet: Optional[SpikingNetwork] = None,
    batch_size: int = 1000,
) -> ArmedResult:
    """
    Two-pass armed inference over a batch.

    Analog detectors run on the dequantized network; spiking detectors need
    ``snet``, the spiking conversion of the clean network, and the faulted
    pass reuses its normalization scales.

    Raises:
        ConfigurationError: if the fault plan or the detector target do not fit the network.
    """
    validate_fault_plan(qnet, cfg.fault_plan)
    clean = qnet.network()
    _check_detector_target(clean, cfg.detector)
    x = check_batch(clean, images)
    faulted = apply_fault_plan(qnet, cfg.fault_plan)

    detector = cfg.detector
    if isinstance(detector, AnalogDetector):
        clean_labels, observable = _analog_pass(clean, x, detector, batch_size)
        triggered = observable > detector.threshold
        labels = clean_labels.copy()
        if triggered.any():
            labels[triggered] = predict(faulted.network(), x[triggered], batch_size)
    else:
        if snet is None:
            raise ConfigurationError("a spiking detector needs the converted spiking network")
        if snet.cfg.timesteps != detector.window:
            raise ConfigurationError(f"detector window {detector.window} != simulation length {snet.cfg.timesteps}")
        clean_labels, record = simulate(snet, x)
        observable = record.neuron_counts(detector.target.layer_index, detector.target.neuron_index)
        triggered = observable > detector.count_threshold
        labels = clean_labels.copy()
        if triggered.any():
            labels[triggered] = simulate(snet.rebind(faulted.network()), x[triggered])[0]
    logger.debug("armed pass: %d of %d inputs triggered", int(triggered.sum()), len(x))
    return ArmedResult(labels=labels, triggered=triggered, observable=observable, clean_labels=clean_labels)


def armed_inference(
    qnet: QuantizedNetwork,
    cfg: TrojanConfig,
    image: np.ndarray,
    snet: Optional[SpikingNetwork] = None,
) -> Tuple[int, bool]:
    """Label and trigger flag for one image."""
    result = armed_predict(qnet, cfg, np.asarray(image)[None], snet)
    return int(result.labels[0]), bool(result.triggered[0])
