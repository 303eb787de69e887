"""Self-describing binary container: JSON header followed by little-endian array blobs.

Layout::

    b"NATK" | uint32 version | uint32 header_len | header (UTF-8 JSON) | blobs

The header records ``kind``, free ``meta`` and, per blob, its name, dtype,
shape, offset (from the end of the header) and byte length.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np

from app.errors import ContainerFormatError

MAGIC = b"NATK"
VERSION = 1
_PREFIX = struct.Struct("<4sII")
_DTYPES = {"<f4": np.dtype("<f4"), "|i1": np.dtype("i1")}


def _blob_dtype(arr: np.ndarray) -> str:
    if arr.dtype == np.int8:
        return "|i1"
    if np.issubdtype(arr.dtype, np.floating):
        return "<f4"
    raise ContainerFormatError(f"unsupported array dtype {arr.dtype}")


def write_container(path: str | Path, kind: str, meta: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> Path:
    """
    Write a container atomically enough for a CLI: the file appears only once fully written.

    Returns:
        Path: the written path.
    """
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    blobs = []
    payload = []
    offset = 0
    for name in sorted(arrays):
        code = _blob_dtype(arrays[name])
        data = np.ascontiguousarray(arrays[name], dtype=_DTYPES[code]).tobytes()
        blobs.append({"name": name, "dtype": code, "shape": list(arrays[name].shape), "offset": offset, "nbytes": len(data)})
        payload.append(data)
        offset += len(data)
    header = json.dumps({"kind": kind, "meta": meta, "blobs": blobs}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tmp = p.with_name(p.name + ".part")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        for data in payload:
            fh.write(data)
    tmp.replace(p)
    return p


def read_container(path: str | Path) -> Tuple[str, Dict[str, Any], Dict[str, np.ndarray]]:
    """
    Read a container written by :func:`write_container`.

    Returns:
        (kind, meta, arrays)

    Raises:
        ContainerFormatError: on bad magic, unknown version, truncated header or blobs.
    """
    p = Path(path)
    raw = p.read_bytes()
    if len(raw) < _PREFIX.size:
        raise ContainerFormatError(f"{p}: file too short ({len(raw)} bytes)")
    magic, version, header_len = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise ContainerFormatError(f"{p}: bad magic {magic!r}")
    if version != VERSION:
        raise ContainerFormatError(f"{p}: unsupported container version {version}")
    start = _PREFIX.size + header_len
    if len(raw) < start:
        raise ContainerFormatError(f"{p}: truncated header")
    try:
        header = json.loads(raw[_PREFIX.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerFormatError(f"{p}: unreadable header: {e}") from e

    arrays: Dict[str, np.ndarray] = {}
    for blob in header.get("blobs", []):
        lo = start + int(blob["offset"])
        hi = lo + int(blob["nbytes"])
        if hi > len(raw):
            raise ContainerFormatError(f"{p}: blob {blob['name']} runs past end of file")
        dtype = _DTYPES.get(blob["dtype"])
        if dtype is None:
            raise ContainerFormatError(f"{p}: unknown dtype {blob['dtype']}")
        shape = tuple(int(s) for s in blob["shape"])
        if int(np.prod(shape)) * dtype.itemsize != int(blob["nbytes"]):
            raise ContainerFormatError(f"{p}: blob {blob['name']} size does not match its shape")
        arrays[blob["name"]] = np.frombuffer(raw[lo:hi], dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    return header.get("kind", ""), header.get("meta", {}), arrays
