"""Sequential network container, forward pass and reverse-mode gradients.

Gradients flow through the same kernels the forward pass uses, so every
derivative here is the exact derivative of ``forward``. Two entry points
matter to the attack modules: :func:`grad_wrt_params` (loss gradient, used by
training and the bit-flip search) and :func:`grad_wrt_input` (gradient of a
scalar read from one layer, used by trigger synthesis).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Protocol, Tuple

import numpy as np

from app.errors import ConfigurationError, InputError, NumericError
from app.nn.layers import (
    LayerSpec,
    activate,
    activation_backward,
    conv2d_backward,
    conv2d_forward,
    conv_padding,
    dense_backward,
    dense_forward,
    dropout_mask,
    maxpool_backward,
    maxpool_forward,
    output_shape_for,
    softmax,
)


@dataclass
class Network:
    """
    Ordered layers plus a flat map of named parameter arrays.

    ``layers[0]`` is always the ``input`` layer; parameters are named
    ``"<layer>/kernel"`` and ``"<layer>/bias"``.
    """

    layers: List[LayerSpec]
    params: Dict[str, np.ndarray]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.layers or self.layers[0].kind != "input":
            raise ConfigurationError("a network starts with an input layer")
        shape = tuple(self.layers[0].output_shape)
        names = set()
        for spec in self.layers[1:]:
            if spec.name in names:
                raise ConfigurationError(f"duplicate layer name {spec.name}")
            names.add(spec.name)
            expected = output_shape_for(spec, shape)
            if tuple(spec.output_shape) != expected:
                raise ConfigurationError(
                    f"layer {spec.name}: declared output shape {spec.output_shape} != computed {expected}"
                )
            if spec.weighted:
                for pname in (spec.kernel_name, spec.bias_name):
                    if pname not in self.params:
                        raise ConfigurationError(f"layer {spec.name} is missing parameter {pname}")
            shape = expected

    # ----- Shape helpers -----

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return tuple(self.layers[0].output_shape)

    @property
    def num_classes(self) -> int:
        return int(self.layers[-1].output_shape[-1])

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.params.values())).dtype if self.params else np.dtype(np.float32)

    def layer_size(self, layer_index: int) -> int:
        return int(np.prod(self.layers[layer_index].output_shape))

    def input_shape_of(self, layer_index: int) -> Tuple[int, ...]:
        return tuple(self.layers[layer_index - 1].output_shape)

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def parameter_names(self) -> List[str]:
        return sorted(self.params)

    # ----- Copies -----

    def copy(self) -> "Network":
        return Network(list(self.layers), {k: v.copy() for k, v in self.params.items()}, copy.deepcopy(self.metadata))

    def astype(self, dtype) -> "Network":
        return Network(list(self.layers), {k: v.astype(dtype) for k, v in self.params.items()}, copy.deepcopy(self.metadata))

    def with_params(self, params: Dict[str, np.ndarray]) -> "Network":
        """Same topology, other parameter arrays (shared, not copied)."""
        return Network(list(self.layers), params, self.metadata)


class ScalarObjective(Protocol):
    """A scalar read from the post-activation output of one layer."""

    layer_index: int

    def value(self, activations: np.ndarray) -> np.ndarray:
        """Per-sample objective, given channel-major activations of shape ``(N, size)``."""

    def gradient(self, activations: np.ndarray) -> np.ndarray:
        """Derivative of the per-sample objective w.r.t. the activations."""


@dataclass(frozen=True)
class NeuronObjective:
    """The activation of one neuron (channel-major flat index)."""

    layer_index: int
    neuron_index: int

    def value(self, activations: np.ndarray) -> np.ndarray:
        return activations[:, self.neuron_index]

    def gradient(self, activations: np.ndarray) -> np.ndarray:
        g = np.zeros_like(activations)
        g[:, self.neuron_index] = 1
        return g


# ----- Layout helpers -----

def channel_major(act: np.ndarray) -> np.ndarray:
    """Flatten ``(N, H, W, C)`` to ``(N, C*H*W)`` in channel-major order; dense outputs pass through."""
    if act.ndim == 4:
        return act.transpose(0, 3, 1, 2).reshape(len(act), -1)
    return act.reshape(len(act), -1)


def from_channel_major(flat: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if len(shape) == 3:
        h, w, c = shape
        return flat.reshape(len(flat), c, h, w).transpose(0, 2, 3, 1)
    return flat.reshape((len(flat),) + tuple(shape))


def neuron_position(net: Network, layer_index: int, neuron_index: int) -> Tuple[int, ...]:
    """Map a channel-major flat index to ``(channel, row, col)`` for conv/pool outputs or ``(unit,)``."""
    shape = net.layers[layer_index].output_shape
    if len(shape) == 3:
        h, w, _ = shape
        c, rest = divmod(neuron_index, h * w)
        r, col = divmod(rest, w)
        return (c, r, col)
    return (neuron_index,)


def receptive_field(net: Network, layer_index: int, row: int, col: int) -> Tuple[int, int, int, int]:
    """
    Image-space window ``(row0, row1, col0, col1)`` (inclusive, unclipped) seen by
    the spatial unit at ``(row, col)`` of a conv/pool/dropout layer.

    Raises:
        ConfigurationError: if a dense layer sits on the path to the input.
    """
    r0, r1, c0, c1 = row, row, col, col
    for idx in range(layer_index, 0, -1):
        spec = net.layers[idx]
        if spec.kind == "dense":
            raise ConfigurationError(f"layer {spec.name} is dense; its receptive field is the whole input")
        if spec.kind == "dropout":
            continue
        kh, kw = spec.kernel_size  # type: ignore[misc]
        sh, sw = spec.strides or (1, 1)
        pt = pl = 0
        if spec.kind == "conv2d":
            (pt, _), (pl, _) = conv_padding(spec, net.input_shape_of(idx))
        r0, r1 = r0 * sh - pt, r1 * sh - pt + kh - 1
        c0, c1 = c0 * sw - pl, c1 * sw - pl + kw - 1
    return r0, r1, c0, c1


# ----- Forward / backward -----

@dataclass
class _Step:
    spec: LayerSpec
    inp: np.ndarray
    pre: np.ndarray
    post: np.ndarray
    aux: Any = None


def check_batch(net: Network, batch: np.ndarray) -> np.ndarray:
    x = np.asarray(batch, dtype=net.dtype)
    if x.shape[1:] != net.input_shape:
        raise ConfigurationError(f"batch shape {x.shape} does not match input layer {net.input_shape}")
    return x


def _run(
    net: Network,
    x: np.ndarray,
    stop: Optional[int] = None,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> List[_Step]:
    stop = len(net.layers) - 1 if stop is None else stop
    steps: List[_Step] = []
    out = x
    for idx in range(1, stop + 1):
        spec = net.layers[idx]
        aux: Any = None
        if spec.kind == "dense":
            pre = dense_forward(out, net.params[spec.kernel_name], net.params[spec.bias_name])
        elif spec.kind == "conv2d":
            pre, aux = conv2d_forward(out, net.params[spec.kernel_name], net.params[spec.bias_name], spec)
        elif spec.kind == "maxpool2d":
            pre, aux = maxpool_forward(out, spec)
        elif spec.kind == "dropout":
            if training and spec.dropout_rate > 0:
                if rng is None:
                    raise ConfigurationError("training-mode dropout needs a random generator")
                aux = dropout_mask(out.shape, spec.dropout_rate, rng, out.dtype)
                pre = out * aux
            else:
                pre = out
        else:
            raise ConfigurationError(f"unexpected layer kind {spec.kind} at index {idx}")
        post = activate(pre, spec.activation)
        if not np.all(np.isfinite(post)):
            raise NumericError(f"non-finite activation in layer {spec.name}", layer=spec.name)
        steps.append(_Step(spec, out, pre, post, aux))
        out = post
    return steps


def _backward(
    net: Network,
    steps: List[_Step],
    grad: np.ndarray,
    from_pre: bool = False,
    need_params: bool = True,
) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """Push ``grad`` (w.r.t. the last step's post, or pre when ``from_pre``) back to the input."""
    grads: Dict[str, np.ndarray] = {}
    for pos in range(len(steps) - 1, -1, -1):
        step = steps[pos]
        spec = step.spec
        if not (from_pre and pos == len(steps) - 1):
            grad = activation_backward(grad, step.pre, step.post, spec.activation)
        if spec.kind == "dense":
            grad, dw, db = dense_backward(grad, step.inp, net.params[spec.kernel_name], need_params)
        elif spec.kind == "conv2d":
            grad, dw, db = conv2d_backward(grad, step.inp.shape, step.aux, net.params[spec.kernel_name], spec, need_params)
        elif spec.kind == "maxpool2d":
            grad = maxpool_backward(grad, step.inp.shape, step.aux, spec)
            continue
        else:
            if step.aux is not None:
                grad = grad * step.aux
            continue
        if need_params:
            grads[spec.kernel_name] = dw
            grads[spec.bias_name] = db
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient in layer {spec.name}", layer=spec.name)
    return grad, grads


def _logits(step: _Step) -> np.ndarray:
    return step.pre if step.spec.activation == "softmax" else step.post


def forward(
    net: Network,
    batch: np.ndarray,
    record: bool = False,
) -> Tuple[np.ndarray, Dict[int, np.ndarray]]:
    """
    Inference pass.

    Args:
        net: the network.
        batch: NHWC images (or ``(N, features)`` for flat inputs).
        record: keep every layer's post-activation output.

    Returns:
        ``(logits, activations)``: logits are the last layer's pre-softmax values;
        ``activations`` maps layer index to post-activation output (empty unless
        ``record``).
    """
    steps = _run(net, check_batch(net, batch))
    acts = {i + 1: s.post for i, s in enumerate(steps)} if record else {}
    return _logits(steps[-1]), acts


def _check_labels(net: Network, labels: np.ndarray, n: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.shape != (n,):
        raise InputError(f"expected {n} labels, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= net.num_classes):
        raise InputError(f"labels must lie in [0, {net.num_classes})")
    return y.astype(np.int64)


def _cross_entropy(logits: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    nll = log_z - shifted[np.arange(len(y)), y]
    probs = softmax(logits)
    probs[np.arange(len(y)), y] -= 1
    return float(nll.mean()), probs / len(y)


def loss_and_grads(
    net: Network,
    batch: np.ndarray,
    labels: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean categorical cross-entropy over softmax logits and its parameter gradients."""
    x = check_batch(net, batch)
    y = _check_labels(net, labels, len(x))
    steps = _run(net, x, training=training, rng=rng)
    value, dlogits = _cross_entropy(_logits(steps[-1]), y)
    from_pre = steps[-1].spec.activation == "softmax"
    _, grads = _backward(net, steps, dlogits, from_pre=from_pre)
    return value, grads


def grad_wrt_params(net: Network, batch: np.ndarray, labels: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Loss gradient for every parameter tensor (same names and shapes as ``net.params``).

    Raises:
        InputError: if a label is out of range.
    """
    return loss_and_grads(net, batch, labels)[1]


def loss(net: Network, batch: np.ndarray, labels: np.ndarray, batch_size: int = 1000) -> float:
    """Mean cross-entropy, evaluated in chunks; identical to the single-batch value up to rounding."""
    x = check_batch(net, batch)
    y = _check_labels(net, labels, len(x))
    total = 0.0
    for start in range(0, len(x), batch_size):
        logits, _ = forward(net, x[start:start + batch_size])
        value, _ = _cross_entropy(logits, y[start:start + batch_size])
        total += value * len(logits)
    return total / max(len(x), 1)


def _check_objective(net: Network, objective: ScalarObjective) -> None:
    idx = objective.layer_index
    if not 1 <= idx < len(net.layers):
        raise InputError(f"target layer {idx} out of range [1, {len(net.layers) - 1}]")
    neuron = getattr(objective, "neuron_index", None)
    if neuron is not None and not 0 <= neuron < net.layer_size(idx):
        raise InputError(f"neuron {neuron} out of range for layer {idx} ({net.layer_size(idx)} neurons)")


def objective_value_and_grad(
    net: Network,
    image: np.ndarray,
    objective: ScalarObjective,
    pre_activation: bool = False,
) -> Tuple[float, np.ndarray]:
    """
    Objective value on one image and its gradient w.r.t. the image's pixels.

    With ``pre_activation`` the objective reads the layer before its
    activation function.
    """
    _check_objective(net, objective)
    single = np.asarray(image).shape == net.input_shape
    x = check_batch(net, np.asarray(image)[None] if single else image)
    if len(x) != 1:
        raise InputError("grad_wrt_input takes a single image")
    steps = _run(net, x, stop=objective.layer_index)
    out = steps[-1].pre if pre_activation else steps[-1].post
    acts = channel_major(out)
    value = float(objective.value(acts)[0])
    g = from_channel_major(objective.gradient(acts).astype(x.dtype), out.shape[1:])
    dx, _ = _backward(net, steps, g, from_pre=pre_activation, need_params=False)
    return value, (dx[0] if single else dx)


def grad_wrt_input(net: Network, image: np.ndarray, objective: ScalarObjective, pre_activation: bool = False) -> np.ndarray:
    """
    Gradient of a scalar objective w.r.t. the input image; same shape as ``image``.

    Raises:
        InputError: if the objective's layer or neuron index is out of range.
    """
    return objective_value_and_grad(net, image, objective, pre_activation)[1]


def layer_activations(net: Network, images: np.ndarray, layer_index: int, batch_size: int = 1000) -> np.ndarray:
    """Channel-major post-activation outputs of one layer, shape ``(N, size)``."""
    if not 1 <= layer_index < len(net.layers):
        raise InputError(f"layer {layer_index} out of range [1, {len(net.layers) - 1}]")
    x = check_batch(net, images)
    chunks = [channel_major(_run(net, x[s:s + batch_size], stop=layer_index)[-1].post) for s in range(0, len(x), batch_size)]
    return np.concatenate(chunks) if chunks else np.zeros((0, net.layer_size(layer_index)), dtype=net.dtype)


def predict(net: Network, images: np.ndarray, batch_size: int = 1000) -> np.ndarray:
    x = check_batch(net, images)
    out = [forward(net, x[s:s + batch_size])[0].argmax(axis=1) for s in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def evaluate_accuracy(net: Network, images: np.ndarray, labels: np.ndarray, batch_size: int = 1000) -> float:
    """
    Top-1 accuracy in [0, 1].

    Raises:
        InputError: on an empty image set.
    """
    if len(images) == 0:
        raise InputError("cannot evaluate accuracy on an empty image set")
    pred = predict(net, images, batch_size)
    return float((pred == np.asarray(labels)).mean())
