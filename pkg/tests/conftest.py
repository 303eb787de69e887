import gzip
import os
import struct
from pathlib import Path

import numpy as np
import pytest

from app.nn.architectures import sequential
from app.quant.quantize import quantize_network
from app.services.datasets import IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC


def pytest_collection_modifyitems(config, items):
    if os.environ.get("NEUROATTACK_RUN_ACCEPTANCE") == "1":
        return
    skip = pytest.mark.skip(reason="set NEUROATTACK_RUN_ACCEPTANCE=1 to run acceptance experiments")
    for item in items:
        if "acceptance" in item.keywords:
            item.add_marker(skip)


def tiny_mlp(seed=0, hidden=6, classes=3, shape=(4, 4, 1)):
    return sequential(
        shape,
        [
            {"kind": "dense", "units": hidden, "activation": "relu"},
            {"kind": "dense", "units": classes, "activation": "softmax"},
        ],
        seed,
    )


def tiny_cnn(seed=0):
    return sequential(
        (6, 6, 1),
        [
            {"kind": "conv2d", "units": 2, "kernel_size": (3, 3), "strides": (1, 1), "padding": "same", "activation": "relu"},
            {"kind": "maxpool2d", "kernel_size": (2, 2), "strides": (2, 2)},
            {"kind": "dropout", "dropout_rate": 0.25},
            {"kind": "conv2d", "units": 3, "kernel_size": (2, 2), "strides": (1, 1), "padding": "valid", "activation": "relu"},
            {"kind": "dense", "units": 3, "activation": "softmax"},
        ],
        seed,
    )


def with_random_biases(net, seed=0, scale=0.1):
    rng = np.random.default_rng(seed)
    params = {
        k: (v + rng.normal(0.0, scale, v.shape).astype(v.dtype)) if k.endswith("/bias") else v
        for k, v in net.params.items()
    }
    return net.with_params(params)


@pytest.fixture
def mlp_net():
    return with_random_biases(tiny_mlp(seed=3))


@pytest.fixture
def cnn_net():
    return with_random_biases(tiny_cnn(seed=5))


@pytest.fixture
def qmlp(mlp_net):
    return quantize_network(mlp_net)


@pytest.fixture
def images_4x4():
    return np.random.default_rng(11).random((40, 4, 4, 1)).astype(np.float32)


@pytest.fixture
def labels_3():
    return np.random.default_rng(12).integers(0, 3, size=40)


def write_idx_images(path: Path, pixels: np.ndarray, compress=False):
    n, rows, cols = pixels.shape
    raw = struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + pixels.astype(np.uint8).tobytes()
    path.write_bytes(gzip.compress(raw) if compress else raw)
    return path


def write_idx_labels(path: Path, labels: np.ndarray, compress=False):
    raw = struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + np.asarray(labels, dtype=np.uint8).tobytes()
    path.write_bytes(gzip.compress(raw) if compress else raw)
    return path


@pytest.fixture
def mnist_root(tmp_path):
    """A miniature MNIST tree: 60 training and 20 test digits of 28x28."""
    rng = np.random.default_rng(0)
    folder = tmp_path / "data" / "mnist"
    folder.mkdir(parents=True)
    write_idx_images(folder / "train-images-idx3-ubyte", rng.integers(0, 256, size=(60, 28, 28)))
    write_idx_labels(folder / "train-labels-idx1-ubyte", rng.integers(0, 10, size=60))
    write_idx_images(folder / "t10k-images-idx3-ubyte.gz", rng.integers(0, 256, size=(20, 28, 28)), compress=True)
    write_idx_labels(folder / "t10k-labels-idx1-ubyte.gz", rng.integers(0, 10, size=20), compress=True)
    return tmp_path / "data"
