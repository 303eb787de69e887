import numpy as np
import pytest
from pydantic import ValidationError

from app.errors import ConfigurationError, InputError
from app.nn.network import predict
from app.quant.faultplan import apply_fault_plan
from app.quant.quantize import BitFlip
from app.snn.convert import convert_to_snn, simulate
from app.snn.lif import LifConfig
from app.trigger.generate import TriggerArtifact
from app.trigger.target import TargetNeuron
from app.trojan.detector import AnalogDetector, SpikingDetector, TrojanConfig, armed_inference, armed_predict
from app.trojan.evaluate import analog_detector, end_to_end_eval
from app.trojan.overhead import counter_transistors, overhead

TARGET = TargetNeuron(layer_index=1, neuron_index=2)
PLAN = [
    BitFlip(param_id="dense_2/kernel", flat_index=0, bit=7),
    BitFlip(param_id="dense_2/kernel", flat_index=4, bit=6),
    BitFlip(param_id="dense_2/bias", flat_index=1, bit=7),
]


def _artifact(shape, threshold, target=TARGET):
    mask = np.zeros(shape, dtype=np.float32)
    mask[0, 0, 0] = 1
    return TriggerArtifact(
        mask=mask,
        trigger=mask * 0.3,
        initial_image=np.zeros(shape, dtype=np.float32),
        target=target,
        mode="stamp",
        initial_value=0.0,
        final_value=0.0,
        threshold=threshold,
        xi=0.0,
        target_output=100.0,
        val_min=0.0,
        val_max=0.3,
        epochs_used=0,
        initial_cost=0.0,
        final_cost=0.0,
    )


# ---------------- Armed inference ----------------

def test_disarmed_detector_leaves_every_label(qmlp, images_4x4):
    cfg = TrojanConfig(fault_plan=PLAN, detector=AnalogDetector(target=TARGET, threshold=np.inf))
    result = armed_predict(qmlp, cfg, images_4x4)
    assert not result.triggered.any()
    np.testing.assert_array_equal(result.labels, predict(qmlp.network(), images_4x4))


def test_always_armed_detector_uses_the_faulted_network(qmlp, images_4x4):
    before = {name: qmlp.codes(name).copy() for name in qmlp.parameter_names()}
    cfg = TrojanConfig(fault_plan=PLAN, detector=AnalogDetector(target=TARGET, threshold=-np.inf))
    result = armed_predict(qmlp, cfg, images_4x4)
    assert result.triggered.all()
    np.testing.assert_array_equal(result.labels, predict(apply_fault_plan(qmlp, PLAN).network(), images_4x4))
    np.testing.assert_array_equal(result.clean_labels, predict(qmlp.network(), images_4x4))
    for name, codes in before.items():
        np.testing.assert_array_equal(qmlp.codes(name), codes)


def test_single_image_inference(qmlp, images_4x4):
    cfg = TrojanConfig(fault_plan=PLAN, detector=AnalogDetector(target=TARGET, threshold=-np.inf))
    label, triggered = armed_inference(qmlp, cfg, images_4x4[0])
    assert triggered
    assert label == int(predict(apply_fault_plan(qmlp, PLAN).network(), images_4x4[:1])[0])


def test_trojan_config_validation():
    with pytest.raises(ValidationError):
        AnalogDetector(target=TARGET, threshold=float("nan"))
    with pytest.raises(ValidationError):
        TrojanConfig(fault_plan=[], detector=AnalogDetector(target=TARGET, threshold=0.0))
    parsed = TrojanConfig.model_validate(
        {"fault_plan": [p.model_dump() for p in PLAN], "detector": {"kind": "spiking", "target": TARGET.model_dump(), "count_threshold": 4}}
    )
    assert isinstance(parsed.detector, SpikingDetector) and parsed.detector.window == 50


def test_plan_and_target_must_fit_the_network(qmlp, images_4x4):
    bad_plan = TrojanConfig(
        fault_plan=[BitFlip(param_id="conv_1/kernel", flat_index=0, bit=0)],
        detector=AnalogDetector(target=TARGET, threshold=0.0),
    )
    with pytest.raises(ConfigurationError):
        armed_predict(qmlp, bad_plan, images_4x4)
    bad_target = TrojanConfig(fault_plan=PLAN, detector=AnalogDetector(target=TargetNeuron(layer_index=1, neuron_index=99), threshold=0.0))
    with pytest.raises(ConfigurationError):
        armed_predict(qmlp, bad_target, images_4x4)


# ---------------- Spiking detector ----------------

def test_saturated_spike_counter_never_fires(qmlp, images_4x4):
    snet = convert_to_snn(qmlp.network(), images_4x4, LifConfig(timesteps=20))
    cfg = TrojanConfig(fault_plan=PLAN, detector=SpikingDetector(target=TARGET, count_threshold=20, window=20))
    result = armed_predict(qmlp, cfg, images_4x4, snet)
    assert not result.triggered.any()
    np.testing.assert_array_equal(result.labels, simulate(snet, images_4x4)[0])


def test_spiking_detector_needs_a_matching_simulation(qmlp, images_4x4):
    cfg = TrojanConfig(fault_plan=PLAN, detector=SpikingDetector(target=TARGET, count_threshold=3, window=30))
    with pytest.raises(ConfigurationError):
        armed_predict(qmlp, cfg, images_4x4)
    snet = convert_to_snn(qmlp.network(), images_4x4, LifConfig(timesteps=20))
    with pytest.raises(ConfigurationError):
        armed_predict(qmlp, cfg, images_4x4, snet)


# ---------------- End to end ----------------

def test_disarmed_trojan_is_stealthy(qmlp, images_4x4, labels_3):
    artifact = _artifact(qmlp.network().input_shape, np.inf)
    cfg = TrojanConfig(fault_plan=PLAN, detector=analog_detector(artifact))
    report = end_to_end_eval(qmlp, cfg, artifact, images_4x4, labels_3)
    assert report.stealth_identical
    assert report.exceed_original == report.exceed_modified == report.rho == 0
    assert report.clean_acc == pytest.approx(report.baseline_acc)
    assert report.flips == 3 and report.dim == 40 and report.detector == "analog"


def test_detector_and_artifact_must_share_the_target(qmlp, images_4x4, labels_3):
    artifact = _artifact(qmlp.network().input_shape, 0.0, target=TargetNeuron(layer_index=1, neuron_index=0))
    cfg = TrojanConfig(fault_plan=PLAN, detector=AnalogDetector(target=TARGET, threshold=0.0))
    with pytest.raises(ConfigurationError):
        end_to_end_eval(qmlp, cfg, artifact, images_4x4, labels_3)


def test_end_to_end_needs_images(qmlp, images_4x4, labels_3):
    artifact = _artifact(qmlp.network().input_shape, 0.0)
    cfg = TrojanConfig(fault_plan=PLAN, detector=analog_detector(artifact))
    with pytest.raises(InputError):
        end_to_end_eval(qmlp, cfg, artifact, images_4x4[:0], labels_3[:0])


# ---------------- Overhead ----------------

@pytest.mark.parametrize("flips, total", [(30, 540), (4, 72), (1, 18)])
def test_dnn_overhead(flips, total):
    report = overhead(flips)
    assert report.total == report.mux_inv_transistors == total
    assert report.counter_transistors is None


def test_snn_overhead_adds_the_counter():
    assert counter_transistors(50) == 288 + 800 == 1088
    report = overhead(30, "snn", counter_modulus=50, timesteps=50)
    assert report.total == 1628


@pytest.mark.parametrize("modulus", [3, 10, 50, 200])
def test_counter_grows_by_one_and_gate_and_four_flip_flops_per_step(modulus):
    assert counter_transistors(modulus + 1) - counter_transistors(modulus) == 6 + 4 * 4
    assert counter_transistors(modulus) == (modulus - 2) * 6 + modulus * 16


@pytest.mark.parametrize(
    "kwargs",
    [
        {"flips": 0},
        {"flips": 3, "domain": "snn"},
        {"flips": 3, "domain": "snn", "counter_modulus": 2},
        {"flips": 3, "domain": "snn", "counter_modulus": 40, "timesteps": 50},
    ],
)
def test_overhead_rejects_impossible_circuits(kwargs):
    with pytest.raises(InputError):
        overhead(**kwargs)
