import numpy as np
import pytest
from pydantic import ValidationError

from app.errors import InputError
from app.faultlab.search import gradient_search_attack
from app.faultlab.sweep import SweepConfig, default_probabilities, flip_random_bits, random_flip_sweep
from app.nn.architectures import sequential
from app.nn.network import grad_wrt_params, loss
from app.quant.faultplan import apply_fault_plan, undo_fault_plan
from app.quant.quantize import BitFlip, apply_bitflip, quantize_network
from conftest import with_random_biases


def test_default_probabilities():
    probs = default_probabilities()
    assert len(probs) == 20 and probs[0] == 0.0 and probs[-1] == pytest.approx(0.95)


def test_sweep_config_validation():
    with pytest.raises(ValidationError):
        SweepConfig(probabilities=[0.2, 0.1])
    with pytest.raises(ValidationError):
        SweepConfig(probabilities=[0.0, 0.99])


def test_zero_probability_flips_nothing(qmlp):
    faulted, n = flip_random_bits(qmlp, 0.0, np.random.default_rng(0))
    assert n == 0 and faulted.same_codes(qmlp)


def test_flip_count_matches_changed_codes(qmlp):
    faulted, n = flip_random_bits(qmlp, 0.3, np.random.default_rng(1))
    changed = sum(int((faulted.codes(k) != qmlp.codes(k)).sum()) for k in qmlp.parameter_names())
    assert changed == n > 0


def test_mean_flip_count_follows_the_binomial_expectation(qmlp, images_4x4, labels_3):
    iterations = 40
    cfg = SweepConfig(probabilities=[0.0, 0.05, 0.3, 0.9], iterations=iterations, seed=11)
    result = random_flip_sweep(qmlp, images_4x4[:4], labels_3[:4], cfg)
    n = qmlp.total_elements()
    for point in result.points:
        p = point.probability
        mean = float(np.mean(point.bits_flipped))
        assert abs(mean - p * n) <= 3 * np.sqrt(n * p * (1 - p) / iterations)


def test_sweep_is_reproducible_and_starts_at_baseline(qmlp, images_4x4, labels_3):
    cfg = SweepConfig(probabilities=[0.0, 0.05, 0.5], iterations=3, seed=7)
    a = random_flip_sweep(qmlp, images_4x4, labels_3, cfg)
    b = random_flip_sweep(qmlp, images_4x4, labels_3, cfg)
    assert a == b
    assert a.points[0].accuracies == [a.baseline_accuracy] * 3
    assert a.points[0].bits_flipped == [0, 0, 0]
    assert len(a.rows()) == 9
    assert a.total_elements == qmlp.total_elements()


def test_sweep_points_are_independent(qmlp, images_4x4, labels_3):
    full = random_flip_sweep(qmlp, images_4x4, labels_3, SweepConfig(probabilities=[0.0, 0.1, 0.2], seed=3))
    alone = random_flip_sweep(qmlp, images_4x4, labels_3, SweepConfig(probabilities=[0.0, 0.1], seed=3))
    assert full.points[1] == alone.points[1]


def test_sweep_needs_a_test_set(qmlp, images_4x4, labels_3):
    with pytest.raises(InputError):
        random_flip_sweep(qmlp, images_4x4[:0], labels_3[:0])


def _small_qnet(seed):
    net = sequential(
        (2, 2, 1),
        [
            {"kind": "dense", "units": 4, "activation": "relu"},
            {"kind": "dense", "units": 3, "activation": "softmax"},
        ],
        seed,
    )
    return quantize_network(with_random_biases(net, seed=seed, scale=0.3))


def _batch(seed):
    rng = np.random.default_rng(100 + seed)
    return rng.random((16, 2, 2, 1)).astype(np.float32), rng.integers(0, 3, size=16)


@pytest.mark.parametrize("seed", range(20))
def test_first_greedy_flip_matches_exhaustive_search_on_the_top_element(seed):
    qnet = _small_qnet(seed)
    assert qnet.total_elements() <= 64
    x, y = _batch(seed)
    trace = gradient_search_attack(qnet, x, y, max_flips=1)

    grads = grad_wrt_params(qnet.network(), x, y)
    scores = [(float(abs(grads[name].reshape(-1)[i])), name, i) for name in sorted(grads) for i in range(grads[name].size)]
    top = max(s[0] for s in scores)
    name, index = next((n, i) for s, n, i in scores if s == top)
    losses = [loss(apply_bitflip(qnet, BitFlip(param_id=name, flat_index=index, bit=b)).network(), x, y) for b in range(8)]

    flip = trace.flips[0]
    assert (flip.param_id, flip.flat_index) == (name, index)
    assert flip.bit == int(np.argmax(losses))
    assert trace.loss[1] == max(losses)


def test_trace_curves_masking_and_undo():
    qnet = _small_qnet(0)
    x, y = _batch(0)
    trace = gradient_search_attack(qnet, x, y, max_flips=5, test_images=x, test_labels=y)
    assert len(trace.flips) == 5 and len(trace.accuracy) == 6 and len(trace.loss) == 6
    assert len(trace.masked) == 5
    assert trace.clean_accuracy == trace.accuracy[0]
    assert trace.loss[0] == pytest.approx(loss(qnet.network(), x, y))
    faulted = apply_fault_plan(qnet, trace.flips)
    assert trace.loss[-1] == pytest.approx(loss(faulted.network(), x, y))
    assert undo_fault_plan(faulted, trace.flips).same_codes(qnet)


def test_search_stops_when_every_element_is_masked():
    qnet = _small_qnet(1)
    x, y = _batch(1)
    trace = gradient_search_attack(qnet, x, y, max_flips=qnet.total_elements() + 3)
    assert trace.truncated
    assert len(trace.flips) == qnet.total_elements()


def test_search_needs_an_attack_batch():
    qnet = _small_qnet(2)
    x, y = _batch(2)
    with pytest.raises(InputError):
        gradient_search_attack(qnet, x[:0], y[:0])
