"""Layer specifications and the numpy kernels behind them.

All image tensors are NHWC. Conv kernels are stored as ``(kh, kw, c_in, c_out)``
and dense kernels as ``(n_in, n_out)``, so column ``t`` of a dense kernel holds
the incoming weights of neuron ``t``.
"""

from __future__ import annotations

import math
from typing import Literal, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field

from app.errors import ConfigurationError

LayerKind = Literal["input", "dense", "conv2d", "maxpool2d", "dropout"]
Activation = Literal["relu", "softmax", "none"]

WEIGHTED_KINDS = ("dense", "conv2d")


class LayerSpec(BaseModel):
    """One layer of a sequential network, as listed in the architecture tables."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., min_length=1)
    kind: LayerKind
    output_shape: Tuple[int, ...] = ()
    kernel_size: Optional[Tuple[int, int]] = None
    strides: Optional[Tuple[int, int]] = None
    padding: Literal["same", "valid"] = "valid"
    units: Optional[int] = Field(None, ge=1)
    dropout_rate: float = Field(0.0, ge=0.0, lt=1.0)
    activation: Activation = "none"

    @property
    def weighted(self) -> bool:
        return self.kind in WEIGHTED_KINDS

    @property
    def kernel_name(self) -> str:
        return f"{self.name}/kernel"

    @property
    def bias_name(self) -> str:
        return f"{self.name}/bias"


# ---------------- Shape arithmetic ----------------

def same_padding(size: int, kernel: int, stride: int) -> Tuple[int, int]:
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def conv_padding(spec: LayerSpec, input_shape: Tuple[int, ...]) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    """Return ((top, bottom), (left, right)) zero padding of a conv layer."""
    kh, kw = spec.kernel_size  # type: ignore[misc]
    sh, sw = spec.strides or (1, 1)
    if spec.padding == "valid":
        return (0, 0), (0, 0)
    return same_padding(input_shape[0], kh, sh), same_padding(input_shape[1], kw, sw)


def output_shape_for(spec: LayerSpec, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
    """
    Standard shape arithmetic for one layer.

    Raises:
        ConfigurationError: if the layer cannot consume ``input_shape``.
    """
    if spec.kind == "input":
        return tuple(spec.output_shape)
    if spec.kind == "dropout":
        return tuple(input_shape)
    if spec.kind == "dense":
        if spec.units is None:
            raise ConfigurationError(f"dense layer {spec.name} needs units")
        return (spec.units,)
    if len(input_shape) != 3:
        raise ConfigurationError(f"{spec.kind} layer {spec.name} needs an (H, W, C) input, got {input_shape}")
    if spec.kernel_size is None:
        raise ConfigurationError(f"{spec.kind} layer {spec.name} needs kernel_size")
    h, w, c = input_shape
    kh, kw = spec.kernel_size
    sh, sw = spec.strides or (1, 1)
    if spec.kind == "maxpool2d":
        if (kh, kw) != (sh, sw):
            raise ConfigurationError(f"pool layer {spec.name}: only non-overlapping windows are supported")
        return (h // kh, w // kw, c)
    if spec.units is None:
        raise ConfigurationError(f"conv layer {spec.name} needs units (output maps)")
    (pt, pb), (pl, pr) = conv_padding(spec, input_shape)
    ho = (h + pt + pb - kh) // sh + 1
    wo = (w + pl + pr - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise ConfigurationError(f"conv layer {spec.name}: kernel larger than input {input_shape}")
    return (ho, wo, spec.units)


# ---------------- Activations ----------------

def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0)
    if activation == "softmax":
        return softmax(z)
    return z


def activation_backward(grad: np.ndarray, pre: np.ndarray, post: np.ndarray, activation: Activation) -> np.ndarray:
    if activation == "relu":
        return grad * (pre > 0)
    if activation == "softmax":
        inner = (grad * post).sum(axis=-1, keepdims=True)
        return post * (grad - inner)
    return grad


# ---------------- Dense ----------------

def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x.reshape(len(x), -1) @ w + b


def dense_backward(grad: np.ndarray, x: np.ndarray, w: np.ndarray, need_params: bool = True):
    flat = x.reshape(len(x), -1)
    dx = (grad @ w.T).reshape(x.shape)
    if not need_params:
        return dx, None, None
    return dx, flat.T @ grad, grad.sum(axis=0)


# ---------------- Conv2D ----------------

def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, spec: LayerSpec):
    """
    Cross-correlation of an NHWC batch with a ``(kh, kw, c_in, c_out)`` kernel.

    Returns:
        (output, windows): ``windows`` is the strided window view of the padded
        input, shape ``(N, Ho, Wo, C, kh, kw)``, reused by the backward pass.
    """
    kh, kw = spec.kernel_size  # type: ignore[misc]
    sh, sw = spec.strides or (1, 1)
    (pt, pb), (pl, pr) = conv_padding(spec, x.shape[1:])
    padded = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x
    windows = sliding_window_view(padded, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
    out = np.tensordot(windows, w.transpose(2, 0, 1, 3), axes=([3, 4, 5], [0, 1, 2]))
    return out + b, windows


def conv2d_backward(
    grad: np.ndarray,
    x_shape: Tuple[int, ...],
    windows: np.ndarray,
    w: np.ndarray,
    spec: LayerSpec,
    need_params: bool = True,
):
    kh, kw = spec.kernel_size  # type: ignore[misc]
    sh, sw = spec.strides or (1, 1)
    (pt, pb), (pl, pr) = conv_padding(spec, x_shape[1:])
    n, h, wd, c = x_shape
    ho, wo = grad.shape[1], grad.shape[2]
    dpad = np.zeros((n, h + pt + pb, wd + pl + pr, c), dtype=grad.dtype)
    for i in range(kh):
        for j in range(kw):
            dpad[:, i:i + sh * ho:sh, j:j + sw * wo:sw, :] += grad @ w[i, j].T
    dx = dpad[:, pt:pt + h, pl:pl + wd, :]
    if not need_params:
        return dx, None, None
    dw = np.tensordot(windows, grad, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
    return dx, dw, grad.sum(axis=(0, 1, 2))


# ---------------- MaxPool2D ----------------

def pool_windows(x: np.ndarray, k: int) -> np.ndarray:
    """Non-overlapping ``k x k`` windows of an NHWC tensor, shape ``(N, Ho, Wo, C, k*k)``."""
    n, h, w, c = x.shape
    ho, wo = h // k, w // k
    cropped = x[:, :ho * k, :wo * k, :]
    return cropped.reshape(n, ho, k, wo, k, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, k * k)


def maxpool_forward(x: np.ndarray, spec: LayerSpec):
    k = spec.kernel_size[0]  # type: ignore[index]
    win = pool_windows(x, k)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool_backward(grad: np.ndarray, x_shape: Tuple[int, ...], arg: np.ndarray, spec: LayerSpec) -> np.ndarray:
    k = spec.kernel_size[0]  # type: ignore[index]
    n, h, w, c = x_shape
    ho, wo = h // k, w // k
    dwin = np.zeros((n, ho, wo, c, k * k), dtype=grad.dtype)
    np.put_along_axis(dwin, arg[..., None], grad[..., None], axis=-1)
    dx = np.zeros(x_shape, dtype=grad.dtype)
    dx[:, :ho * k, :wo * k, :] = dwin.reshape(n, ho, wo, c, k, k).transpose(0, 1, 4, 2, 5, 3).reshape(n, ho * k, wo * k, c)
    return dx


# ---------------- Dropout ----------------

def dropout_mask(shape: Tuple[int, ...], rate: float, rng: np.random.Generator, dtype) -> np.ndarray:
    # inverted dropout: inference stays the identity
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / np.asarray(1.0 - rate, dtype=dtype)
