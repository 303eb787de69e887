"""Target layer and neuron selection."""

from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.errors import InputError
from app.nn.network import Network, layer_activations, receptive_field

logger = logging.getLogger(__name__)


class TargetNeuron(BaseModel):
    """A neuron of one layer; ``neuron_index`` is channel-major for conv outputs."""

    model_config = ConfigDict(frozen=True)

    layer_index: int = Field(..., ge=1)
    neuron_index: int = Field(..., ge=0)


def check_target(net: Network, target: TargetNeuron) -> None:
    """
    Raises:
        InputError: if the layer or neuron index is out of range.
    """
    if target.layer_index >= len(net.layers):
        raise InputError(f"target layer {target.layer_index} out of range [1, {len(net.layers) - 1}]")
    size = net.layer_size(target.layer_index)
    if target.neuron_index >= size:
        raise InputError(f"target neuron {target.neuron_index} out of range for layer {target.layer_index} ({size} neurons)")


def incoming_weight_mass(net: Network, layer_index: int) -> np.ndarray:
    """
    Sum of |incoming weights| per neuron of a dense layer, or per output
    channel of a conv layer.

    Raises:
        InputError: for a layer without weights.
    """
    if not 1 <= layer_index < len(net.layers):
        raise InputError(f"layer {layer_index} out of range [1, {len(net.layers) - 1}]")
    spec = net.layers[layer_index]
    if not spec.weighted:
        raise InputError(f"layer {spec.name} ({spec.kind}) has no weights to rank")
    w = np.abs(net.params[spec.kernel_name].astype(np.float64))
    if spec.kind == "dense":
        return w.sum(axis=0)
    return w.sum(axis=(0, 1, 2))


def _central_unit(net: Network, layer_index: int) -> Tuple[int, int]:
    """Spatial unit whose receptive field lies inside the image and sits nearest its center."""
    ho, wo, _ = net.layers[layer_index].output_shape
    h, w = net.input_shape[0], net.input_shape[1]
    best: Optional[Tuple[float, int, int]] = None
    fallback: Optional[Tuple[float, int, int]] = None
    for r in range(ho):
        for c in range(wo):
            r0, r1, c0, c1 = receptive_field(net, layer_index, r, c)
            dist = ((r0 + r1) / 2 - (h - 1) / 2) ** 2 + ((c0 + c1) / 2 - (w - 1) / 2) ** 2
            inside = r0 >= 0 and c0 >= 0 and r1 < h and c1 < w
            # strict < keeps the lowest flat index on ties
            if inside and (best is None or dist < best[0]):
                best = (dist, r, c)
            if fallback is None or dist < fallback[0]:
                fallback = (dist, r, c)
    chosen = best or fallback
    assert chosen is not None
    return chosen[1], chosen[2]


def select_target_neuron(net: Network, layer_index: int) -> TargetNeuron:
    """
    Pick the neuron with the largest sum of absolute incoming weights.

    For conv layers the ranking is over output channels, and the observed unit
    of the winning channel is the center-most one whose receptive field is
    fully inside the image. Ties go to the lowest index.

    Raises:
        InputError: for pooling, dropout or input layers.
    """
    mass = incoming_weight_mass(net, layer_index)
    best = int(np.argmax(mass))
    spec = net.layers[layer_index]
    if spec.kind == "dense":
        target = TargetNeuron(layer_index=layer_index, neuron_index=best)
    else:
        ho, wo, _ = spec.output_shape
        r, c = _central_unit(net, layer_index)
        target = TargetNeuron(layer_index=layer_index, neuron_index=best * ho * wo + r * wo + c)
        logger.debug("conv target channel %d at (%d, %d)", best, r, c)
    logger.info("target neuron %s (|W| sum %.4f)", target.model_dump(), float(mass[best]))
    return target


def target_activations(net: Network, images: np.ndarray, target: TargetNeuron, batch_size: int = 1000) -> np.ndarray:
    """Post-activation value of the target neuron on every image."""
    check_target(net, target)
    return layer_activations(net, images, target.layer_index, batch_size)[:, target.neuron_index]
