"""Symmetric per-tensor int8 quantization and single-bit fault injection.

Codes are two's-complement int8 with ``scale = max|w| / 127``. Inference always
runs on the dequantized floats, so analog and quantized networks share the
forward path in :mod:`app.nn.network`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.errors import ContainerFormatError, InputError
from app.nn.checkpoint import network_from_meta
from app.nn.layers import LayerSpec
from app.nn.network import Network
from app.services.container import read_container, write_container

KIND = "quantized-network"
CODE_MAX = 127


@dataclass(frozen=True)
class QuantizedParam:
    codes: np.ndarray
    scale: float

    def dequantize(self) -> np.ndarray:
        return self.codes.astype(np.float32) * np.float32(self.scale)


class BitFlip(BaseModel):
    """One bit of one int8 code; bit 0 is the LSB, bit 7 the sign bit."""

    model_config = ConfigDict(frozen=True)

    param_id: str = Field(..., min_length=1)
    flat_index: int = Field(..., ge=0)
    bit: int = Field(..., ge=0, le=7)


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_tensor(w: np.ndarray) -> QuantizedParam:
    """
    Quantize one tensor; an all-zero tensor gets scale 1.0 and zero codes.

    Raises:
        InputError: if ``w`` holds NaN or Inf.
    """
    w64 = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w64)):
        raise InputError("cannot quantize a tensor with non-finite values")
    peak = float(np.abs(w64).max()) if w64.size else 0.0
    if peak == 0.0:
        return QuantizedParam(np.zeros(w64.shape, dtype=np.int8), 1.0)
    scale = peak / CODE_MAX
    codes = np.clip(round_half_away(w64 / scale), -CODE_MAX, CODE_MAX).astype(np.int8)
    return QuantizedParam(codes, scale)


@dataclass
class QuantizedNetwork:
    """
    A network whose parameters are int8 codes plus scales.

    Treat instances as immutable: :func:`apply_bitflip` returns a new object
    that shares every untouched tensor with its parent.
    """

    layers: List[LayerSpec]
    params: Dict[str, QuantizedParam]
    metadata: Dict[str, Any] = field(default_factory=dict)
    _float: Optional[Dict[str, np.ndarray]] = field(default=None, repr=False, compare=False)

    def network(self) -> Network:
        """The dequantized float network (built once, then cached)."""
        if self._float is None:
            self._float = {k: qp.dequantize() for k, qp in self.params.items()}
        return Network(list(self.layers), self._float, self.metadata)

    def codes(self, param_id: str) -> np.ndarray:
        return self.params[param_id].codes

    def parameter_names(self) -> List[str]:
        return sorted(self.params)

    def total_elements(self) -> int:
        return int(sum(qp.codes.size for qp in self.params.values()))

    def same_codes(self, other: "QuantizedNetwork") -> bool:
        return self.params.keys() == other.params.keys() and all(
            np.array_equal(self.params[k].codes, other.params[k].codes) for k in self.params
        )

    def with_codes(self, updates: Dict[str, np.ndarray]) -> "QuantizedNetwork":
        params = dict(self.params)
        for name, codes in updates.items():
            params[name] = QuantizedParam(codes, self.params[name].scale)
        return QuantizedNetwork(list(self.layers), params, self.metadata)


def quantize_network(net: Network) -> QuantizedNetwork:
    """Quantize every weight and bias tensor of ``net``; activations stay float."""
    params = {name: quantize_tensor(w) for name, w in net.params.items()}
    meta = dict(net.metadata)
    meta["quantization"] = "int8-symmetric-per-tensor"
    return QuantizedNetwork(list(net.layers), params, meta)


def flip_code(code: int, bit: int) -> int:
    """XOR one bit of a two's-complement int8 value."""
    raw = (int(code) & 0xFF) ^ (1 << bit)
    return raw - 256 if raw >= 128 else raw


def apply_bitflip(qnet: QuantizedNetwork, flip: BitFlip) -> QuantizedNetwork:
    """
    Return a copy of ``qnet`` with exactly one code XORed with ``1 << flip.bit``.

    Raises:
        InputError: if the parameter does not exist or the index is out of range.
    """
    qp = qnet.params.get(flip.param_id)
    if qp is None:
        raise InputError(f"unknown parameter {flip.param_id!r}")
    if not 0 <= flip.flat_index < qp.codes.size:
        raise InputError(f"index {flip.flat_index} out of range for {flip.param_id} ({qp.codes.size} elements)")
    codes = qp.codes.copy()
    raw = codes.reshape(-1).view(np.uint8)
    raw[flip.flat_index] ^= np.uint8(1 << flip.bit)
    out = qnet.with_codes({flip.param_id: codes})
    if qnet._float is not None:
        floats = dict(qnet._float)
        arr = floats[flip.param_id].copy()
        arr.reshape(-1)[flip.flat_index] = np.float32(codes.reshape(-1)[flip.flat_index]) * np.float32(qp.scale)
        floats[flip.param_id] = arr
        out._float = floats
    return out


# ---------------- Persistence ----------------

def save_quantized(qnet: QuantizedNetwork, path: str | Path, extra: Optional[Dict[str, Any]] = None) -> Path:
    meta: Dict[str, Any] = {
        "layers": [spec.model_dump(mode="json") for spec in qnet.layers],
        "metadata": qnet.metadata,
        "scales": {k: qp.scale for k, qp in qnet.params.items()},
    }
    if extra:
        meta.update(extra)
    return write_container(path, KIND, meta, {k: qp.codes for k, qp in qnet.params.items()})


def load_quantized(path: str | Path) -> QuantizedNetwork:
    """
    Load a quantized checkpoint; a float checkpoint is quantized on the fly.

    Raises:
        ContainerFormatError: for any other container kind.
    """
    kind, meta, arrays = read_container(path)
    if kind == "network":
        return quantize_network(network_from_meta(meta, {k: v.astype(np.float32) for k, v in arrays.items()}))
    if kind != KIND:
        raise ContainerFormatError(f"{path}: expected a network checkpoint, found {kind!r}")
    scales = meta.get("scales", {})
    params = {k: QuantizedParam(v.astype(np.int8), float(scales[k])) for k, v in arrays.items()}
    layers = [LayerSpec.model_validate(raw) for raw in meta["layers"]]
    qnet = QuantizedNetwork(layers, params, dict(meta.get("metadata", {})))
    qnet.network()  # validates topology against parameters
    return qnet
