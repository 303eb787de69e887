"""Trigger masks: gradient support of the target neuron, or a fixed square."""

from __future__ import annotations

import logging
from typing import Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.errors import ConfigurationError, InputError
from app.nn.network import Network, NeuronObjective, grad_wrt_input
from app.trigger.target import TargetNeuron, check_target

logger = logging.getLogger(__name__)

GRADIENT_EPS = 1e-12

Corner = Literal["top-left", "top-right", "bottom-left", "bottom-right", "center"]


class GradientMask(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["gradient"] = "gradient"


class SquareMask(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["square"] = "square"
    side: int = Field(..., ge=1)
    corner: Corner = "bottom-right"


MaskMode = Union[GradientMask, SquareMask]


def parse_mask_mode(text: str) -> MaskMode:
    """
    Parse ``gradient`` or ``square:<side>[,<corner>]``.

    Raises:
        InputError: on anything else.
    """
    text = text.strip()
    if text == "gradient":
        return GradientMask()
    if text.startswith("square:"):
        parts = text[len("square:"):].split(",")
        try:
            side = int(parts[0])
        except ValueError as e:
            raise InputError(f"bad square side in mask mode {text!r}") from e
        corner = parts[1].strip() if len(parts) > 1 else "bottom-right"
        try:
            return SquareMask(side=side, corner=corner)
        except ValueError as e:
            raise InputError(f"bad mask mode {text!r}: {e}") from e
    raise InputError(f"unknown mask mode {text!r}; use 'gradient' or 'square:<side>,<corner>'")


def gradient_support(net: Network, target: TargetNeuron, image: np.ndarray) -> np.ndarray:
    """
    Boolean image-shaped map of pixels with |d z_k / d pixel| above ``GRADIENT_EPS``,
    where z_k is the target's pre-activation. A target that is silent on
    ``image`` still gets its full footprint.
    """
    check_target(net, target)
    g = grad_wrt_input(net, image, NeuronObjective(target.layer_index, target.neuron_index), pre_activation=True)
    return np.abs(g.astype(np.float64)) > GRADIENT_EPS


def square_mask(shape: tuple, side: int, corner: Corner) -> np.ndarray:
    h, w = shape[0], shape[1]
    if side > min(h, w):
        raise ConfigurationError(f"square side {side} does not fit a {h}x{w} image")
    r0 = {"top-left": 0, "top-right": 0, "bottom-left": h - side, "bottom-right": h - side}.get(corner, (h - side) // 2)
    c0 = {"top-left": 0, "top-right": w - side, "bottom-left": 0, "bottom-right": w - side}.get(corner, (w - side) // 2)
    mask = np.zeros(shape, dtype=np.float32)
    mask[r0:r0 + side, c0:c0 + side, ...] = 1.0
    return mask


def build_mask(net: Network, target: TargetNeuron, initial_image: np.ndarray, mode: MaskMode = GradientMask()) -> np.ndarray:
    """
    Binary float32 mask with the image's shape.

    Raises:
        ConfigurationError: if the mask has no pixel in common with the target's gradient support.
    """
    support = gradient_support(net, target, initial_image)
    if isinstance(mode, SquareMask):
        mask = square_mask(net.input_shape, mode.side, mode.corner)
    else:
        mask = support.astype(np.float32)
    overlap = int(np.count_nonzero(support & (mask > 0)))
    if overlap == 0:
        raise ConfigurationError(
            f"mask {mode.model_dump()} does not overlap the gradient support of neuron {target.model_dump()}; "
            "the trigger loop cannot move the target from there"
        )
    logger.info("mask %s: %d pixels, %d inside gradient support", mode.kind, int(mask.sum()), overlap)
    return mask
