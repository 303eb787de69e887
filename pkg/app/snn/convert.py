"""Data-normalized DNN to SNN conversion and the rate-coded simulator.

Every weighted layer ``l`` gets a scale ``lam_l``: the chosen percentile of its
positive activations on a calibration set (the output layer uses its
pre-softmax values). Spiking weights are ``W * lam_prev / lam_l`` and biases
``b / lam_l``, so a normalized activation of 1 maps onto the maximum rate.

Pixels enter as constant currents. Deeper layers integrate the spikes of the
layer below every step. Max-pooling forwards, per window, the spikes of the
input unit with the highest running spike count. The class is the output unit
with the most spikes, ties broken by membrane potential.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from app.errors import CalibrationError, InputError, UnsupportedModelError
from app.log import progress_enabled
from app.nn.layers import conv2d_forward, dense_forward, maxpool_forward, pool_windows
from app.nn.network import Network, check_batch, channel_major, forward, layer_activations
from app.snn.lif import LifConfig, lif_step

logger = logging.getLogger(__name__)


@dataclass
class SpikeRecord:
    """Spike counts of every layer (indexed like ``Network.layers``) over one window."""

    counts: Dict[int, np.ndarray]
    timesteps: int
    output_potential: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    def rates(self, layer_index: int) -> np.ndarray:
        """Channel-major spike rates, shape ``(N, size)``."""
        return channel_major(self.counts[layer_index]) / self.timesteps

    def neuron_counts(self, layer_index: int, neuron_index: int) -> np.ndarray:
        return channel_major(self.counts[layer_index])[:, neuron_index]


def _weighted_indices(net: Network) -> List[int]:
    return [i for i, spec in enumerate(net.layers) if spec.weighted]


def normalize_params(net: Network, scales: Dict[int, float]) -> Dict[str, np.ndarray]:
    params: Dict[str, np.ndarray] = {}
    prev = 1.0
    for idx in _weighted_indices(net):
        spec = net.layers[idx]
        lam = scales[idx]
        params[spec.kernel_name] = (net.params[spec.kernel_name] * np.float32(prev / lam)).astype(np.float32)
        params[spec.bias_name] = (net.params[spec.bias_name] / np.float32(lam)).astype(np.float32)
        prev = lam
    return params


@dataclass
class SpikingNetwork:
    """A converted network: the source topology, its normalized parameters and scales."""

    source: Network
    params: Dict[str, np.ndarray]
    scales: Dict[int, float]
    cfg: LifConfig = field(default_factory=LifConfig)
    percentile: float = 99.9

    @property
    def layers(self):
        return self.source.layers

    @property
    def output_index(self) -> int:
        return _weighted_indices(self.source)[-1]

    def rebind(self, net: Network) -> "SpikingNetwork":
        """Same scales, weights taken from ``net`` (e.g. a faulted copy of the source)."""
        return SpikingNetwork(net, normalize_params(net, self.scales), dict(self.scales), self.cfg, self.percentile)


def check_convertible(net: Network) -> None:
    """
    Raises:
        UnsupportedModelError: if a hidden weighted layer is not ReLU.
    """
    weighted = _weighted_indices(net)
    if not weighted:
        raise UnsupportedModelError("network has no weighted layer to convert")
    for idx in weighted[:-1]:
        spec = net.layers[idx]
        if spec.activation != "relu":
            raise UnsupportedModelError(f"hidden layer {spec.name} uses {spec.activation!r}; only ReLU converts to rates")


def convert_to_snn(
    net: Network,
    calibration: np.ndarray,
    cfg: LifConfig = LifConfig(),
    percentile: float = 99.9,
    batch_size: int = 1000,
) -> SpikingNetwork:
    """
    Raises:
        UnsupportedModelError: for non-ReLU hidden layers.
        InputError: on an empty calibration set.
    """
    check_convertible(net)
    if len(calibration) == 0:
        raise InputError("conversion needs at least one calibration image")
    weighted = _weighted_indices(net)
    samples: Dict[int, List[np.ndarray]] = {idx: [] for idx in weighted}
    x = check_batch(net, calibration)
    for start in range(0, len(x), batch_size):
        logits, acts = forward(net, x[start:start + batch_size], record=True)
        for idx in weighted:
            values = logits if idx == weighted[-1] else acts[idx]
            samples[idx].append(values[values > 0].astype(np.float64))
    scales: Dict[int, float] = {}
    for idx in weighted:
        positive = np.concatenate(samples[idx])
        if positive.size == 0:
            logger.warning("layer %s never activates on the calibration set; scale left at 1", net.layers[idx].name)
            scales[idx] = 1.0
        else:
            scales[idx] = float(np.percentile(positive, percentile))
    logger.info("conversion scales: %s", {net.layers[i].name: round(s, 4) for i, s in scales.items()})
    return SpikingNetwork(net, normalize_params(net, scales), scales, cfg, percentile)


def _simulate_batch(snet: SpikingNetwork, x: np.ndarray) -> Tuple[np.ndarray, SpikeRecord]:
    cfg = snet.cfg
    layers = snet.layers
    gain = np.float32(cfg.drive_gain)
    out_idx = snet.output_index
    potentials: Dict[int, np.ndarray] = {}
    counts: Dict[int, np.ndarray] = {
        idx: np.zeros((len(x),) + tuple(spec.output_shape), dtype=np.int32) for idx, spec in enumerate(layers) if idx > 0
    }
    constant: Dict[int, np.ndarray] = {}

    for _ in range(cfg.timesteps):
        signal = x
        static = True
        for idx in range(1, len(layers)):
            spec = layers[idx]
            if spec.weighted:
                cur = constant.get(idx) if static else None
                if cur is None:
                    w, b = snet.params[spec.kernel_name], snet.params[spec.bias_name]
                    pre = dense_forward(signal, w, b) if spec.kind == "dense" else conv2d_forward(signal, w, b, spec)[0]
                    cur = gain * pre
                    if static:
                        constant[idx] = cur
                v = potentials.get(idx, np.full(cur.shape, cfg.v_reset, dtype=np.float32))
                potentials[idx], spikes = lif_step(v, cur, cfg)
                counts[idx] += spikes
                signal = spikes.astype(np.float32)
                static = False
            elif spec.kind == "maxpool2d":
                if static:
                    signal = maxpool_forward(signal, spec)[0]
                    continue
                k = spec.kernel_size[0]  # type: ignore[index]
                arg = pool_windows(counts[idx - 1], k).argmax(axis=-1)
                signal = np.take_along_axis(pool_windows(signal, k), arg[..., None], axis=-1)[..., 0]
                counts[idx] += signal.astype(np.int32)
            elif not static:
                counts[idx] += signal.astype(np.int32)

    out_counts = counts[out_idx].reshape(len(x), -1)
    v_out = potentials[out_idx].reshape(len(x), -1)
    best = out_counts.max(axis=1, keepdims=True)
    labels = np.where(out_counts == best, v_out, -np.inf).argmax(axis=1)
    return labels, SpikeRecord(counts, cfg.timesteps, v_out)


def simulate(snet: SpikingNetwork, images: np.ndarray, batch_size: int = 100):
    """
    Run the T-step simulation.

    Returns:
        ``(labels, SpikeRecord)`` for a batch; ``(label, SpikeRecord)`` for a single image.
    """
    single = np.asarray(images).shape == snet.source.input_shape
    x = check_batch(snet.source, np.asarray(images)[None] if single else images)
    parts = []
    for start in tqdm(range(0, len(x), batch_size), desc="snn", disable=not progress_enabled() or len(x) <= batch_size):
        parts.append(_simulate_batch(snet, x[start:start + batch_size]))
    if not parts:
        raise InputError("simulate needs at least one image")
    labels = np.concatenate([p[0] for p in parts])
    record = SpikeRecord(
        {idx: np.concatenate([p[1].counts[idx] for p in parts]) for idx in parts[0][1].counts},
        snet.cfg.timesteps,
        np.concatenate([p[1].output_potential for p in parts]),
    )
    if single:
        return int(labels[0]), record
    return labels, record


def snn_accuracy(snet: SpikingNetwork, images: np.ndarray, labels: np.ndarray, batch_size: int = 100) -> float:
    if len(images) == 0:
        raise InputError("cannot evaluate accuracy on an empty image set")
    pred, _ = simulate(snet, images, batch_size)
    return float((pred == np.asarray(labels)).mean())


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """
    Raises:
        CalibrationError: if either side has zero variance.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.std() == 0 or b.std() == 0:
        raise CalibrationError("correlation undefined: one of the series is constant")
    return float(np.corrcoef(a, b)[0, 1])


def rate_correlation(
    net: Network,
    snet: SpikingNetwork,
    images: np.ndarray,
    layer_index: int,
    record: Optional[SpikeRecord] = None,
) -> float:
    """Pearson r between analog activations and spike rates over every neuron of one layer."""
    analog = layer_activations(net, images, layer_index)
    if record is None:
        _, record = simulate(snet, images)
    return pearson(analog, record.rates(layer_index))
