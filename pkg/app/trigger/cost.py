"""Trigger cost: squared distance of the target layer to its desired outputs.

The desired output of every neuron is its activation on the random initial
image, frozen once, except the target neuron whose desired output is
``target_output``. The cost is the mean over the layer's N neurons.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from app.nn.network import Network, layer_activations, objective_value_and_grad
from app.trigger.target import TargetNeuron, check_target


@dataclass(frozen=True, eq=False)
class TriggerCost:
    """Scalar objective usable with :func:`app.nn.network.grad_wrt_input`."""

    target: TargetNeuron
    target_output: float
    initial_outputs: np.ndarray
    _desired: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        desired = np.asarray(self.initial_outputs, dtype=np.float64).copy()
        desired[self.target.neuron_index] = self.target_output
        object.__setattr__(self, "_desired", desired)

    @property
    def layer_index(self) -> int:
        return self.target.layer_index

    @property
    def neuron_index(self) -> int:
        return self.target.neuron_index

    @property
    def size(self) -> int:
        return int(self._desired.size)

    def value(self, activations: np.ndarray) -> np.ndarray:
        delta = self._desired - activations.astype(np.float64)
        return (delta ** 2).sum(axis=1) / self.size

    def gradient(self, activations: np.ndarray) -> np.ndarray:
        delta = self._desired - activations.astype(np.float64)
        return -2.0 * delta / self.size


def snapshot_outputs(net: Network, image: np.ndarray, target: TargetNeuron) -> np.ndarray:
    """Activations of the whole target layer on one image (channel-major)."""
    check_target(net, target)
    return layer_activations(net, np.asarray(image)[None], target.layer_index)[0].astype(np.float64)


def cost_and_grad(net: Network, image: np.ndarray, cost: TriggerCost) -> Tuple[float, np.ndarray]:
    return objective_value_and_grad(net, image, cost)


def trigger_cost(
    net: Network,
    image: np.ndarray,
    target: TargetNeuron,
    target_output: float,
    initial_outputs: Optional[np.ndarray] = None,
) -> float:
    """
    Cost of ``image``; without a snapshot, ``image`` itself is the initial image.
    """
    if initial_outputs is None:
        initial_outputs = snapshot_outputs(net, image, target)
    objective = TriggerCost(target, target_output, initial_outputs)
    acts = layer_activations(net, np.asarray(image)[None], target.layer_index)
    return float(objective.value(acts)[0])
