"""Builders for the three networks studied: the MNIST MLP, LeNet-5 and the CIFAR-10 CNN."""

from __future__ import annotations

from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np

from app.errors import ConfigurationError
from app.nn.layers import LayerSpec, output_shape_for
from app.nn.network import Network


def glorot_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def sequential(
    input_shape: Tuple[int, ...],
    layers: Sequence[Dict[str, Any]],
    seed: int = 0,
    metadata: Dict[str, Any] | None = None,
) -> Network:
    """
    Build a network from layer keyword dicts, filling output shapes and
    Glorot-uniform kernels (zero biases) from ``seed``.
    """
    rng = np.random.default_rng(seed)
    specs: List[LayerSpec] = [LayerSpec(name="input", kind="input", output_shape=tuple(input_shape))]
    params: Dict[str, np.ndarray] = {}
    shape = tuple(input_shape)
    counts: Dict[str, int] = {}
    for raw in layers:
        kind = raw["kind"]
        counts[kind] = counts.get(kind, 0) + 1
        name = raw.get("name") or f"{kind}_{counts[kind]}"
        spec = LayerSpec(name=name, **{k: v for k, v in raw.items() if k != "name"})
        out = output_shape_for(spec, shape)
        spec = spec.model_copy(update={"output_shape": out})
        if spec.kind == "dense":
            fan_in = int(np.prod(shape))
            params[spec.kernel_name] = glorot_uniform(rng, (fan_in, spec.units), fan_in, spec.units)
            params[spec.bias_name] = np.zeros(spec.units, dtype=np.float32)
        elif spec.kind == "conv2d":
            kh, kw = spec.kernel_size  # type: ignore[misc]
            c_in = shape[-1]
            params[spec.kernel_name] = glorot_uniform(rng, (kh, kw, c_in, spec.units), kh * kw * c_in, kh * kw * spec.units)
            params[spec.bias_name] = np.zeros(spec.units, dtype=np.float32)
        specs.append(spec)
        shape = out
    meta = {"training_seed": seed}
    meta.update(metadata or {})
    return Network(specs, params, meta)


def mlp(seed: int = 0) -> Network:
    """784-1200-1200-10 perceptron on flattened 28x28 digits."""
    return sequential(
        (28, 28, 1),
        [
            {"kind": "dense", "units": 1200, "activation": "relu"},
            {"kind": "dense", "units": 1200, "activation": "relu"},
            {"kind": "dense", "units": 10, "activation": "softmax"},
        ],
        seed,
        {"arch": "mlp", "dataset": "mnist"},
    )


def lenet(seed: int = 0) -> Network:
    """LeNet-5 variant: conv1 keeps 28x28 (same), conv2 shrinks 14 to 10 (valid)."""
    return sequential(
        (28, 28, 1),
        [
            {"kind": "conv2d", "units": 32, "kernel_size": (5, 5), "strides": (1, 1), "padding": "same", "activation": "relu"},
            {"kind": "maxpool2d", "kernel_size": (2, 2), "strides": (2, 2)},
            {"kind": "conv2d", "units": 48, "kernel_size": (5, 5), "strides": (1, 1), "padding": "valid", "activation": "relu"},
            {"kind": "maxpool2d", "kernel_size": (2, 2), "strides": (2, 2)},
            {"kind": "dense", "units": 256, "activation": "relu"},
            {"kind": "dense", "units": 84, "activation": "relu"},
            {"kind": "dense", "units": 10, "activation": "softmax"},
        ],
        seed,
        {"arch": "lenet", "dataset": "mnist"},
    )


def cifar_cnn(seed: int = 0) -> Network:
    """Two same/valid conv blocks with dropout, then dense 512 and 10."""
    conv = {"kind": "conv2d", "kernel_size": (3, 3), "strides": (1, 1), "activation": "relu"}
    pool = {"kind": "maxpool2d", "kernel_size": (2, 2), "strides": (2, 2)}
    drop = {"kind": "dropout", "dropout_rate": 0.25}
    return sequential(
        (32, 32, 3),
        [
            {**conv, "units": 32, "padding": "same"},
            {**conv, "units": 32, "padding": "valid"},
            pool,
            drop,
            {**conv, "units": 64, "padding": "same"},
            {**conv, "units": 64, "padding": "valid"},
            pool,
            drop,
            {"kind": "dense", "units": 512, "activation": "relu"},
            drop,
            {"kind": "dense", "units": 10, "activation": "softmax"},
        ],
        seed,
        {"arch": "cifar_cnn", "dataset": "cifar10"},
    )


ARCHITECTURES: Dict[str, Callable[[int], Network]] = {
    "mlp": mlp,
    "lenet": lenet,
    "cifar_cnn": cifar_cnn,
}


def build(arch: str, seed: int = 0) -> Network:
    try:
        return ARCHITECTURES[arch](seed)
    except KeyError:
        raise ConfigurationError(f"unknown architecture {arch!r}; choose from {sorted(ARCHITECTURES)}") from None
