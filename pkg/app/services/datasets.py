"""MNIST (IDX) and CIFAR-10 (binary batches) loaders.

Pixels come back as float32 NHWC in [0, 1], labels as int64. Every file is
validated in full before any array is returned; a bad magic number, a bad
header or a length mismatch raises :class:`DatasetFormatError` with the byte
offset where the file stops making sense.
"""

from __future__ import annotations

import gzip
import hashlib
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np

from app.config import settings
from app.errors import DatasetFormatError, InputError

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
CIFAR_TRAIN = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST = ["test_batch.bin"]

DatasetName = Literal["mnist", "cifar10"]


@dataclass
class DatasetHandle:
    name: str
    train_images: np.ndarray
    train_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray
    checksums: Dict[str, str] = field(default_factory=dict)

    def test_subset(self, n: Optional[int]) -> Tuple[np.ndarray, np.ndarray]:
        """The first ``n`` test images (all of them for ``None``)."""
        if n is None:
            return self.test_images, self.test_labels
        return self.test_images[:n], self.test_labels[:n]


def _read_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if path.suffix == ".gz":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as e:
            raise DatasetFormatError(f"corrupt gzip stream: {e}", str(path), 0) from e
    return raw


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def read_idx_images(path: str | Path) -> np.ndarray:
    p = Path(path)
    raw = _read_bytes(p)
    if len(raw) < 16:
        raise DatasetFormatError("truncated IDX image header", str(p), len(raw))
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DatasetFormatError(f"bad IDX image magic 0x{magic:08x}", str(p), 0)
    expected = 16 + n * rows * cols
    if len(raw) != expected:
        raise DatasetFormatError(f"expected {expected} bytes for {n} images of {rows}x{cols}, found {len(raw)}", str(p), min(len(raw), expected))
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, rows, cols, 1)
    return pixels.astype(np.float32) / np.float32(255.0)


def read_idx_labels(path: str | Path) -> np.ndarray:
    p = Path(path)
    raw = _read_bytes(p)
    if len(raw) < 8:
        raise DatasetFormatError("truncated IDX label header", str(p), len(raw))
    magic, n = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DatasetFormatError(f"bad IDX label magic 0x{magic:08x}", str(p), 0)
    if len(raw) != 8 + n:
        raise DatasetFormatError(f"expected {8 + n} bytes for {n} labels, found {len(raw)}", str(p), min(len(raw), 8 + n))
    labels = np.frombuffer(raw, dtype=np.uint8, offset=8).astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        i = int(bad[0])
        raise DatasetFormatError(f"label {int(labels[i])} at index {i} is outside 0..9", str(p), 8 + i)
    return labels


def read_cifar_batch(path: str | Path) -> Tuple[np.ndarray, np.ndarray]:
    """One binary batch: each record is a label byte then 1024 R, 1024 G and 1024 B bytes."""
    p = Path(path)
    raw = _read_bytes(p)
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        raise DatasetFormatError(
            f"length {len(raw)} is not a multiple of the {CIFAR_RECORD}-byte record", str(p), len(raw) - len(raw) % CIFAR_RECORD
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise DatasetFormatError(f"label {labels[bad[0]]} out of range", str(p), int(bad[0]) * CIFAR_RECORD)
    images = records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return images.astype(np.float32) / np.float32(255.0), labels


def _find(folder: Path, name: str) -> Path:
    for candidate in (folder / name, folder / f"{name}.gz"):
        if candidate.is_file():
            return candidate
    raise InputError(f"dataset file {name} not found under {folder}")


def dataset_dir(name: str, root: str | Path) -> Path:
    base = Path(root).expanduser()
    if name == "mnist":
        return base / "mnist" if (base / "mnist").is_dir() else base
    nested = base / "cifar10" / "cifar-10-batches-bin"
    if nested.is_dir():
        return nested
    return base / "cifar10" if (base / "cifar10").is_dir() else base


def dataset_files(name: str, root: str | Path) -> List[Path]:
    folder = dataset_dir(name, root)
    names = list(MNIST_FILES.values()) if name == "mnist" else CIFAR_TRAIN + CIFAR_TEST
    return [_find(folder, n) for n in names]


def _load_mnist(root: str | Path) -> DatasetHandle:
    folder = dataset_dir("mnist", root)
    paths = {key: _find(folder, fname) for key, fname in MNIST_FILES.items()}
    train_x, test_x = read_idx_images(paths["train_images"]), read_idx_images(paths["test_images"])
    train_y, test_y = read_idx_labels(paths["train_labels"]), read_idx_labels(paths["test_labels"])
    for images, labels, key in ((train_x, train_y, "train_labels"), (test_x, test_y, "test_labels")):
        if len(images) != len(labels):
            raise DatasetFormatError(f"{len(images)} images but {len(labels)} labels", str(paths[key]), 8)
    return DatasetHandle("mnist", train_x, train_y, test_x, test_y, {p.name: sha256_file(p) for p in paths.values()})


def _load_cifar(root: str | Path) -> DatasetHandle:
    folder = dataset_dir("cifar10", root)
    train = [read_cifar_batch(_find(folder, n)) for n in CIFAR_TRAIN]
    test = read_cifar_batch(_find(folder, CIFAR_TEST[0]))
    checksums = {n: sha256_file(_find(folder, n)) for n in CIFAR_TRAIN + CIFAR_TEST}
    return DatasetHandle(
        "cifar10",
        np.concatenate([b[0] for b in train]),
        np.concatenate([b[1] for b in train]),
        test[0],
        test[1],
        checksums,
    )


def load_dataset(name: str, root: str | Path | None = None) -> DatasetHandle:
    """
    Load ``mnist`` or ``cifar10`` from ``root`` (default: ``NEUROATTACK_DATA_ROOT``).

    MNIST is looked up in ``<root>/mnist`` or ``<root>``; CIFAR-10 in
    ``<root>/cifar10/cifar-10-batches-bin``, ``<root>/cifar10`` or ``<root>``.
    Files may be gzipped.

    Raises:
        InputError: unknown dataset or missing file.
        DatasetFormatError: malformed file.
    """
    root = root if root is not None else settings.data_root
    if name == "mnist":
        handle = _load_mnist(root)
    elif name == "cifar10":
        handle = _load_cifar(root)
    else:
        raise InputError(f"unknown dataset {name!r}; use 'mnist' or 'cifar10'")
    logger.info("loaded %s: %d train / %d test images", name, len(handle.train_images), len(handle.test_images))
    return handle
