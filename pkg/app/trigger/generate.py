"""Trigger generation loop.

The trigger starts as the masked random initial image and descends the
trigger cost by masked gradient steps, clipped to ``[val_min, val_max]``
after every step, until the cost drops to ``th`` or the epoch budget runs out.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from app.errors import InputError
from app.log import progress_enabled
from app.nn.network import Network
from app.trigger.cost import TriggerCost, cost_and_grad, snapshot_outputs
from app.trigger.mask import GradientMask, MaskMode, build_mask
from app.trigger.target import TargetNeuron, check_target, select_target_neuron, target_activations

logger = logging.getLogger(__name__)

ApplyMode = Literal["stamp", "noise"]


class TriggerLoopConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    val_min: float = Field(0.0, ge=0.0, le=1.0)
    val_max: float = Field(0.3, ge=0.0, le=1.0)
    lr: float = Field(0.1, ge=0.0)
    epochs: int = Field(1000, ge=1)
    # None: stop once the target term falls below 1% of its initial value
    th: Optional[float] = Field(None, ge=0.0)
    target_output: float = 100.0
    xi: float = Field(0.1, ge=0.0)
    mode: ApplyMode = "stamp"
    seed: int = 0
    stagnation_patience: int = Field(50, ge=1)

    @model_validator(mode="after")
    def _check_bounds(self) -> "TriggerLoopConfig":
        if not self.val_min < self.val_max:
            raise ValueError("val_min must be smaller than val_max")
        return self


@dataclass
class TriggerArtifact:
    """Everything needed to apply a trigger and arm a detector on it."""

    mask: np.ndarray
    trigger: np.ndarray
    initial_image: np.ndarray
    target: TargetNeuron
    mode: ApplyMode
    initial_value: float
    final_value: float
    threshold: float
    xi: float
    target_output: float
    val_min: float
    val_max: float
    epochs_used: int
    initial_cost: float
    final_cost: float
    stagnated: bool = False
    mask_mode: str = "gradient"
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def mask_area(self) -> int:
        return int(np.count_nonzero(self.mask))


def random_initial_image(shape: tuple, seed: int) -> np.ndarray:
    """Uniform [0, 1) pixels from a seeded generator."""
    return np.random.default_rng(seed).random(shape).astype(np.float32)


def generate_trigger(
    net: Network,
    target: TargetNeuron,
    mask: np.ndarray,
    cfg: TriggerLoopConfig = TriggerLoopConfig(),
    initial_image: Optional[np.ndarray] = None,
    mask_mode: str = "gradient",
) -> TriggerArtifact:
    """
    Optimize a trigger for ``target`` inside ``mask``.

    The desired outputs of the target layer are frozen on ``initial_image``
    (drawn from ``cfg.seed`` when omitted). The trigger is initialized to the
    masked initial image clipped to the pixel bounds, so with ``lr == 0`` the
    loop returns that starting point.

    Raises:
        InputError: if the mask shape differs from the input or the mask is empty.
    """
    check_target(net, target)
    m = np.asarray(mask, dtype=np.float32)
    if m.shape != net.input_shape:
        raise InputError(f"mask shape {m.shape} does not match input {net.input_shape}")
    if not np.any(m):
        raise InputError("mask is empty")
    x0 = random_initial_image(net.input_shape, cfg.seed) if initial_image is None else np.asarray(initial_image, dtype=np.float32)

    initial_outputs = snapshot_outputs(net, x0, target)
    initial_value = float(initial_outputs[target.neuron_index])
    cost = TriggerCost(target, cfg.target_output, initial_outputs)
    th = cfg.th if cfg.th is not None else 0.01 * (cfg.target_output - initial_value) ** 2 / cost.size

    x = np.clip(x0 * m, cfg.val_min, cfg.val_max) * m
    value, grad = cost_and_grad(net, x, cost)
    initial_cost = best = value
    since_best = 0
    stagnated = False
    epc = 0
    bar = tqdm(total=cfg.epochs, desc="trigger", disable=not progress_enabled())
    while value > th and epc < cfg.epochs:
        x = np.clip(x - cfg.lr * (grad * m), cfg.val_min, cfg.val_max) * m
        epc += 1
        value, grad = cost_and_grad(net, x, cost)
        bar.update(1)
        if value < best:
            best, since_best = value, 0
        else:
            since_best += 1
            if since_best >= cfg.stagnation_patience:
                stagnated = True
                logger.warning("trigger cost has not decreased for %d epochs; stopping at epoch %d (cost %.6g)", since_best, epc, value)
                break
    bar.close()

    final_value = float(target_activations(net, x[None], target)[0])
    if final_value < initial_value:
        stagnated = True
        logger.warning("target activation fell from %.4f to %.4f", initial_value, final_value)
    logger.info(
        "trigger done: epochs=%d cost %.6g -> %.6g, a_k %.4f -> %.4f",
        epc, initial_cost, value, initial_value, final_value,
    )
    return TriggerArtifact(
        mask=m,
        trigger=x.astype(np.float32),
        initial_image=x0,
        target=target,
        mode=cfg.mode,
        initial_value=initial_value,
        final_value=final_value,
        threshold=final_value - cfg.xi,
        xi=cfg.xi,
        target_output=cfg.target_output,
        val_min=cfg.val_min,
        val_max=cfg.val_max,
        epochs_used=epc,
        initial_cost=float(initial_cost),
        final_cost=float(value),
        stagnated=stagnated,
        mask_mode=mask_mode,
        config={**cfg.model_dump(mode="json"), "th_effective": th},
    )


def synthesize_trigger(
    net: Network,
    layer_index: int,
    mask_mode: MaskMode = GradientMask(),
    cfg: TriggerLoopConfig = TriggerLoopConfig(),
) -> TriggerArtifact:
    """Target selection, mask construction and the loop, all from ``cfg.seed``."""
    target = select_target_neuron(net, layer_index)
    x0 = random_initial_image(net.input_shape, cfg.seed)
    mask = build_mask(net, target, x0, mask_mode)
    label = "gradient" if mask_mode.kind == "gradient" else f"square:{mask_mode.side},{mask_mode.corner}"  # type: ignore[union-attr]
    return generate_trigger(net, target, mask, cfg, initial_image=x0, mask_mode=label)
