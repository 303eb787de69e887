"""One function per experiment id.

Each task reads what it needs from the ExperimentConfig, calls the module
operations and writes its report files under ``out_dir``. Tasks return the
paths they wrote; the runner adds the provenance record.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from app.config import settings
from app.errors import ConfigurationError
from app.experiments.schemas import ExperimentConfig
from app.faultlab.search import gradient_search_attack
from app.faultlab.sweep import random_flip_sweep
from app.nn.architectures import build
from app.nn.checkpoint import load_network, save_network
from app.nn.network import evaluate_accuracy, predict
from app.nn.train import train
from app.quant.faultplan import read_fault_plan
from app.quant.quantize import QuantizedNetwork, load_quantized, quantize_network, save_quantized
from app.services.datasets import DatasetHandle, load_dataset
from app.services.reports import write_csv, write_json
from app.snn.calibrate import rate_threshold
from app.snn.convert import convert_to_snn, rate_correlation, simulate
from app.trigger.artifact import artifact_summary, load_artifact, save_artifact
from app.trigger.generate import TriggerArtifact, synthesize_trigger
from app.trigger.mask import SquareMask, parse_mask_mode
from app.trigger.metrics import apply_trigger, compute_s, evaluate_exceed
from app.trigger.target import select_target_neuron, target_activations
from app.trojan.detector import SpikingDetector, TrojanConfig
from app.trojan.evaluate import analog_detector, end_to_end_eval
from app.trojan.overhead import overhead

logger = logging.getLogger(__name__)

Task = Callable[[ExperimentConfig, str, Path], List[Path]]


# ---------------- Helpers ----------------

def _primary(cfg: ExperimentConfig, out_dir: Path, default: str) -> Path:
    if cfg.out and Path(cfg.out).is_absolute():
        return Path(cfg.out)
    return out_dir / (cfg.out or default)


def _require(value: Optional[str], flag: str, experiment: str) -> str:
    if not value:
        raise ConfigurationError(f"experiment {experiment!r} needs {flag}")
    return value


def _dataset(cfg: ExperimentConfig) -> DatasetHandle:
    return load_dataset(cfg.dataset, cfg.data_root)


def _test_set(cfg: ExperimentConfig, data: DatasetHandle) -> Tuple[np.ndarray, np.ndarray]:
    return data.test_subset(cfg.test_limit)


def _qnet(cfg: ExperimentConfig) -> QuantizedNetwork:
    return load_quantized(_require(cfg.net, "a network checkpoint (--net)", cfg.experiment))


def _artifact(cfg: ExperimentConfig) -> TriggerArtifact:
    return load_artifact(_require(cfg.trigger_path, "a trigger artifact (--trigger)", cfg.experiment))


def _mixed_calibration(data: DatasetHandle, artifact: Optional[TriggerArtifact], n: int) -> np.ndarray:
    """Training images, half of them carrying the trigger so the fit spans the threshold."""
    clean = data.train_images[:n]
    if artifact is None:
        return clean
    half = n // 2
    return np.concatenate([clean[:n - half], apply_trigger(clean[n - half:], artifact)])


# ---------------- Tasks ----------------

def run_train(cfg: ExperimentConfig, digest: str, out_dir: Path) -> List[Path]:
    data = _dataset(cfg)
    net = load_network(cfg.net) if cfg.net else build(cfg.arch, cfg.seed)
    result = train(net, data.train_images, data.train_labels, *_test_set(cfg, data), cfg.train)
    model = save_network(
        result.network, _primary(cfg, out_dir, "model.bin"),
        extra={"config_hash": digest, "test_accuracy": result.test_accuracy},
    )
    rows = [(i + 1, loss_, acc) for i, (loss_, acc) in enumerate(zip(result.train_loss, result.test_accuracy))]
    curve = write_csv(out_dir / "train.csv", ["epoch", "train_loss", "test_accuracy"], rows, digest)
    return [model, curve]


def run_quantize(cfg: ExperimentConfig, digest: str, out_dir: Path) -> List[Path]:
    data = _dataset(cfg)
    net = load_network(_require(cfg.net, "a network checkpoint (--net)", cfg.experiment))
    qnet = quantize_network(net)
    x, y = _test_set(cfg, data)
    float_acc = evaluate_accuracy(net, x, y, settings.eval_batch)
    quant_acc = evaluate_accuracy(qnet.network(), x, y, settings.eval_batch)
    logger.info("float accuracy %.4f, int8 accuracy %.4f", float_acc, quant_acc)
    ckpt = save_quantized(qnet, _primary(cfg, out_dir, "qmodel.bin"), extra={"config_hash": digest})
    summary = write_json(
        out_dir / "quantize.json",
        {"float_accuracy": float_acc, "quantized_accuracy": quant_acc, "parameters": qnet.total_elements()},
        digest,
    )
    return [ckpt, summary]


def run_sweep(cfg: ExperimentConfig, digest: str, out_dir: Path) -> List[Path]:
    data = _dataset(cfg)
    qnet = _qnet(cfg)
    result = random_flip_sweep(qnet, *_test_set(cfg, data), cfg.sweep, settings.eval_batch)
    csv_path = write_csv(
        _primary(cfg, out_dir, "sweep.csv"), ["probability", "iteration", "bits_flipped", "accuracy"], result.rows(), digest
    )
    summary = write_json(out_dir / "sweep.json", result.model_dump(mode="json"), digest)
    return [csv_path, summary]


def run_search(cfg: ExperimentConfig, digest: str, out_dir: Path) -> List[Path]:
    data = _dataset(cfg)
    qnet = _qnet(cfg)
    rng = np.random.default_rng(cfg.seed)
    pick = rng.choice(len(data.train_images), size=min(cfg.search.attack_batch, len(data.train_images)), replace=False)
    trace = gradient_search_attack(
        qnet, data.train_images[pick], data.train_labels[pick], cfg.search.max_flips,
        *_test_set(cfg, data), batch_size=settings.eval_batch,
    )
    doc = trace.model_dump(mode="json")
    doc["clean_accuracy"] = trace.clean_accuracy
    trace_path = write_json(_primary(cfg, out_dir, "trace.json"), doc, digest)
    rows = [(0, "", "", "", trace.loss[0], trace.accuracy[0])]
    rows += [
        (k + 1, f.param_id, f.flat_index, f.bit, trace.loss[k + 1], trace.accuracy[k + 1])
        for k, f in enumerate(trace.flips)
    ]
    curve = write_csv(out_dir / "trace.csv", ["flips", "param_id", "flat_index", "bit", "loss", "accuracy"], rows, digest)
    return [trace_path, curve]


def run_trigger(cfg: ExperimentConfig, digest: str, out_dir: Path) -> List[Path]:
    net = _qnet(cfg).network()
    artifact = synthesize_trigger(net, cfg.trigger.layer_index, parse_mask_mode(cfg.trigger.mask), cfg.trigger.loop)
    s_value = compute_s(net, artifact.target, artifact)
    path = save_artifact(artifact, _primary(cfg, out_dir, "trigger.bin"))
    summary = write_json(out_dir / "trigger.json", {**artifact_summary(artifact), "S": s_value}, digest)
    return [path, summary]


def run_trigger_eval(cfg: ExperimentConfig, digest: str, out_dir: Path) -> List[Path]:
    data = _dataset(cfg)
    net = _qnet(cfg).network()
    artifact = _artifact(cfg)
    x, _ = _test_set(cfg, data)
    report = evaluate_exceed(net, artifact, x, cfg.stealth, settings.eval_batch)
    perturbation = float(np.abs(apply_trigger(x, artifact) - x).max()) if len(x) else 0.0
    header = ["exceed_original", "exceed_modified", "rho", "dim", "threshold", "max_perturbation",
              "condition_1", "condition_2", "condition_3"]
    row = [report.exceed_original, report.exceed_modified, report.rho, report.dim, report.threshold, perturbation,
           *report.conditions]
    csv_path = write_csv(_primary(cfg, out_dir, "exceed.csv"), header, [row], digest)
    summary = write_json(out_dir / "exceed.json", {**report.model_dump(mode="json"), "max_perturbation": perturbation}, digest)
    return [csv_path, summary]


def run_trigger_size(cfg: ExperimentConfig, digest: str, out_dir: Path) -> List[Path]:
    data = _dataset(cfg)
    net = _qnet(cfg).network()
    x, _ = _test_set(cfg, data)
    section = cfg.trigger_size
    rows = []
    written: List[Path] = []
    for side in section.sides:
        artifact = synthesize_trigger(net, section.layer_index, SquareMask(side=side, corner=section.corner), section.loop)
        report = evaluate_exceed(net, artifact, x, cfg.stealth, settings.eval_batch)
        written.append(save_artifact(artifact, out_dir / "trigger_size" / f"side_{side}.bin"))
        rows.append((
            side, artifact.mask_area, artifact.initial_value, artifact.final_value, artifact.threshold,
            report.exceed_original, report.exceed_modified, report.rho,
        ))
        logger.info("side %d: rho=%d", side, report.rho)
    header = ["side", "mask_area", "initial_value", "final_value", "threshold", "exceed_original", "exceed_modified", "rho"]
    return [write_csv(_primary(cfg, out_dir, "trigger_size.csv"), header, rows, digest), *written]


def run_trojan(cfg: ExperimentConfig, digest: str, out_dir: Path) -> List[Path]:
    data = _dataset(cfg)
    qnet = _qnet(cfg)
    artifact = _artifact(cfg)
    plan = read_fault_plan(_require(cfg.faults_path, "a fault plan (--faults)", cfg.experiment))
    x, y = _test_set(cfg, data)
    extra: Dict[str, object] = {}
    snet = None
    if cfg.trojan.mode == "dnn":
        detector = analog_detector(artifact)
    else:
        lif = cfg.snn.lif
        snet = convert_to_snn(qnet.network(), data.train_images[:cfg.snn.calibration], lif, cfg.snn.percentile)
        calib = _mixed_calibration(data, artifact, cfg.snn.calibration)
        count, fit = rate_threshold(artifact.threshold, artifact.target, calib, snet)
        detector = SpikingDetector(target=artifact.target, count_threshold=count, window=lif.timesteps)
        extra = {"count_threshold": count, "rate_fit": fit.model_dump()}
    trojan = TrojanConfig(fault_plan=plan, detector=detector)
    report = end_to_end_eval(qnet, trojan, artifact, x, y, snet, cfg.stealth, settings.eval_batch)
    return [write_json(_primary(cfg, out_dir, "report.json"), {**report.model_dump(mode="json"), **extra}, digest)]


def run_snn(cfg: ExperimentConfig, digest: str, out_dir: Path) -> List[Path]:
    data = _dataset(cfg)
    net = _qnet(cfg).network()
    section = cfg.snn
    artifact = _artifact(cfg) if cfg.trigger_path else None
    target = artifact.target if artifact else select_target_neuron(net, section.layer_index)

    snet = convert_to_snn(net, data.train_images[:section.calibration], section.lif, section.percentile)
    x, y = data.test_images[:section.eval_images], data.test_labels[:section.eval_images]
    dnn_labels = predict(net, x, settings.eval_batch)
    snn_labels, record = simulate(snet, x)
    rates = record.neuron_counts(target.layer_index, target.neuron_index) / section.lif.timesteps
    rows = [(i, int(d), int(s), float(r)) for i, (d, s, r) in enumerate(zip(dnn_labels, snn_labels, rates))]
    csv_path = write_csv(_primary(cfg, out_dir, "snn.csv"), ["image_id", "dnn_label", "snn_label", "target_neuron_rate"], rows, digest)

    calib = _mixed_calibration(data, artifact, section.calibration)
    summary: Dict[str, object] = {
        "target": target.model_dump(),
        "dnn_accuracy": float((dnn_labels == y).mean()),
        "snn_accuracy": float((snn_labels == y).mean()),
        "label_agreement": float((dnn_labels == snn_labels).mean()),
        "rate_correlation": rate_correlation(net, snet, calib, target.layer_index),
        "scales": {net.layers[i].name: s for i, s in snet.scales.items()},
        "lif": section.lif.model_dump(),
    }
    if artifact is not None:
        count, fit = rate_threshold(artifact.threshold, target, calib, snet)
        both = np.concatenate([x, apply_trigger(x, artifact)])
        analog = target_activations(net, both, target, settings.eval_batch) > artifact.threshold
        _, both_record = simulate(snet, both)
        spiking = both_record.neuron_counts(target.layer_index, target.neuron_index) > count
        summary.update({
            "count_threshold": count,
            "rate_fit": fit.model_dump(),
            "detector_agreement": float((analog == spiking).mean()),
        })
    summary_path = write_json(out_dir / "snn.json", summary, digest)
    return [csv_path, summary_path]


def run_overhead(cfg: ExperimentConfig, digest: str, out_dir: Path) -> List[Path]:
    section = cfg.overhead
    report = overhead(section.flips, section.domain, section.counter_modulus, section.timesteps)
    return [write_json(_primary(cfg, out_dir, "overhead.json"), report.model_dump(mode="json"), digest)]


TASKS: Dict[str, Task] = {
    "train": run_train,
    "quantize": run_quantize,
    "sweep": run_sweep,
    "search": run_search,
    "trigger": run_trigger,
    "trigger-eval": run_trigger_eval,
    "trigger-size": run_trigger_size,
    "trojan": run_trojan,
    "snn": run_snn,
    "overhead": run_overhead,
}
