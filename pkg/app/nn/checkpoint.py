"""Network checkpoints in the shared container format (float32 parameters)."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from app.errors import ContainerFormatError
from app.nn.layers import LayerSpec
from app.nn.network import Network
from app.services.container import read_container, write_container

KIND = "network"


def save_network(net: Network, path: str | Path, extra: Optional[Dict[str, Any]] = None) -> Path:
    meta = {
        "layers": [spec.model_dump(mode="json") for spec in net.layers],
        "metadata": net.metadata,
    }
    if extra:
        meta.update(extra)
    return write_container(path, KIND, meta, {k: v.astype(np.float32) for k, v in net.params.items()})


def network_from_meta(meta: Dict[str, Any], params: Dict[str, np.ndarray]) -> Network:
    try:
        layers = [LayerSpec.model_validate(raw) for raw in meta["layers"]]
    except (KeyError, TypeError) as e:
        raise ContainerFormatError(f"checkpoint header has no usable layer list: {e}") from e
    return Network(layers, params, dict(meta.get("metadata", {})))


def load_network(path: str | Path) -> Network:
    """
    Raises:
        ContainerFormatError: if the file is not a float network checkpoint.
    """
    kind, meta, arrays = read_container(path)
    if kind != KIND:
        raise ContainerFormatError(f"{path}: expected a {KIND!r} checkpoint, found {kind!r}")
    return network_from_meta(meta, {k: v.astype(np.float32) for k, v in arrays.items()})
