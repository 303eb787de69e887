import logging

import numpy as np
import pytest
from pydantic import ValidationError

from app.errors import ConfigurationError, InputError
from app.nn.architectures import lenet, mlp, sequential
from app.nn.network import neuron_position, receptive_field
from app.trigger.artifact import load_artifact, save_artifact
from app.trigger.cost import TriggerCost, trigger_cost
from app.trigger.generate import TriggerArtifact, TriggerLoopConfig, generate_trigger, random_initial_image, synthesize_trigger
from app.trigger.mask import GradientMask, SquareMask, build_mask, gradient_support, parse_mask_mode, square_mask
from app.trigger.metrics import StealthCriteria, apply_trigger, compute_s, evaluate_exceed
from app.trigger.target import TargetNeuron, incoming_weight_mass, select_target_neuron, target_activations


def _two_by_two(kernel):
    net = sequential(
        (1, 2, 1),
        [
            {"kind": "dense", "units": 2, "activation": "relu"},
            {"kind": "dense", "units": 2, "activation": "softmax"},
        ],
    )
    params = dict(net.params)
    params["dense_1/kernel"] = np.asarray(kernel, dtype=np.float32)
    return net.with_params(params)


def _artifact(trigger, mask, mode="stamp", target=TargetNeuron(layer_index=1, neuron_index=0), threshold=0.5):
    return TriggerArtifact(
        mask=np.asarray(mask, dtype=np.float32),
        trigger=np.asarray(trigger, dtype=np.float32),
        initial_image=np.zeros_like(trigger, dtype=np.float32),
        target=target,
        mode=mode,
        initial_value=0.0,
        final_value=threshold,
        threshold=threshold,
        xi=0.0,
        target_output=100.0,
        val_min=0.0,
        val_max=0.3,
        epochs_used=0,
        initial_cost=0.0,
        final_cost=0.0,
    )


# ---------------- Target selection ----------------

def test_largest_incoming_weight_mass_wins():
    net = _two_by_two([[1.0, 0.5], [-1.0, 0.5]])
    np.testing.assert_allclose(incoming_weight_mass(net, 1), [2.0, 1.0])
    assert select_target_neuron(net, 1) == TargetNeuron(layer_index=1, neuron_index=0)


def test_selection_is_scale_invariant_and_breaks_ties_low():
    net = _two_by_two([[3.0, 1.5], [-3.0, 1.5]])
    assert select_target_neuron(net, 1).neuron_index == 0
    tie = _two_by_two([[1.0, -1.0], [1.0, 1.0]])
    assert select_target_neuron(tie, 1).neuron_index == 0


def test_conv_target_sits_inside_the_image():
    net = lenet(seed=0)
    target = select_target_neuron(net, 1)
    channel, row, col = neuron_position(net, 1, target.neuron_index)
    assert channel == int(np.argmax(incoming_weight_mass(net, 1)))
    r0, r1, c0, c1 = receptive_field(net, 1, row, col)
    assert r0 >= 0 and c0 >= 0 and r1 < 28 and c1 < 28
    assert (row, col) == (13, 13)


def test_layers_without_weights_cannot_be_ranked():
    with pytest.raises(InputError):
        select_target_neuron(lenet(seed=0), 2)


# ---------------- Cost ----------------

def test_cost_at_the_initial_image_is_only_the_target_term():
    cost = TriggerCost(TargetNeuron(layer_index=1, neuron_index=1), 10.0, np.array([1.0, 2.0, 3.0]))
    acts = np.array([[1.0, 2.0, 3.0]])
    assert cost.value(acts)[0] == pytest.approx(64 / 3)
    np.testing.assert_allclose(cost.gradient(acts)[0], [0.0, -16 / 3, 0.0])


def test_cost_reaches_zero_at_the_desired_outputs():
    cost = TriggerCost(TargetNeuron(layer_index=1, neuron_index=0), 5.0, np.array([0.0, 1.0]))
    assert cost.value(np.array([[5.0, 1.0]]))[0] == 0.0


def test_trigger_cost_of_the_initial_image(mlp_net):
    image = random_initial_image(mlp_net.input_shape, 0)
    target = select_target_neuron(mlp_net, 1)
    a = target_activations(mlp_net, image[None], target)[0]
    n = mlp_net.layer_size(1)
    assert trigger_cost(mlp_net, image, target, 100.0) == pytest.approx((100.0 - a) ** 2 / n, rel=1e-6)


# ---------------- Masks ----------------

def test_parse_mask_mode():
    assert parse_mask_mode("gradient") == GradientMask()
    assert parse_mask_mode("square:7,top-left") == SquareMask(side=7, corner="top-left")
    assert parse_mask_mode("square:5") == SquareMask(side=5, corner="bottom-right")
    for bad in ("square:x", "square:3,middle", "circle:3"):
        with pytest.raises(InputError):
            parse_mask_mode(bad)


@pytest.mark.parametrize("side", range(5, 18, 2))
def test_square_masks_on_mnist(side):
    mask = square_mask((28, 28, 1), side, "bottom-right")
    assert mask.sum() == side * side
    assert mask[27, 27, 0] == 1 and mask[27 - side, 27, 0] == 0


def test_square_mask_must_fit():
    with pytest.raises(ConfigurationError):
        square_mask((28, 28, 1), 29, "center")


def test_lenet_conv1_gradient_mask_is_the_kernel_footprint():
    net = lenet(seed=0)
    target = select_target_neuron(net, 1)
    mask = build_mask(net, target, random_initial_image(net.input_shape, 0))
    assert int(mask.sum()) == 25


def test_mlp_gradient_mask_covers_the_image():
    net = mlp(seed=0)
    target = select_target_neuron(net, 1)
    mask = build_mask(net, target, random_initial_image(net.input_shape, 0))
    assert int(mask.sum()) == 28 * 28


def test_square_mask_without_gradient_overlap_is_rejected():
    net = lenet(seed=0)
    target = select_target_neuron(net, 1)
    with pytest.raises(ConfigurationError):
        build_mask(net, target, random_initial_image(net.input_shape, 0), SquareMask(side=5, corner="top-left"))


def test_square_mask_keeps_its_full_area_past_the_gradient_support():
    net = lenet(seed=0)
    target = select_target_neuron(net, 1)
    x0 = random_initial_image(net.input_shape, 0)
    mask = build_mask(net, target, x0, SquareMask(side=28, corner="center"))
    assert mask.sum() == 28 * 28
    assert np.count_nonzero(gradient_support(net, target, x0)) < 28 * 28


# ---------------- Loop ----------------

def test_zero_learning_rate_returns_the_masked_initial_image(mlp_net):
    cfg = TriggerLoopConfig(lr=0.0, epochs=3, val_max=0.3, seed=2)
    target = select_target_neuron(mlp_net, 1)
    x0 = random_initial_image(mlp_net.input_shape, 2)
    mask = square_mask(mlp_net.input_shape, 2, "top-left")
    art = generate_trigger(mlp_net, target, mask, cfg, initial_image=x0)
    np.testing.assert_array_equal(art.trigger, np.clip(x0 * mask, 0.0, 0.3) * mask)
    assert art.epochs_used == 3


def test_trigger_respects_bounds_and_mask(mlp_net):
    cfg = TriggerLoopConfig(lr=5.0, epochs=40, val_min=0.05, val_max=0.3, seed=1)
    art = synthesize_trigger(mlp_net, 1, SquareMask(side=3, corner="center"), cfg)
    inside = art.trigger[art.mask > 0]
    assert np.all(inside >= 0.05) and np.all(inside <= 0.3)
    assert np.all(art.trigger[art.mask == 0] == 0)
    assert art.threshold == art.final_value - art.xi
    assert art.xi == cfg.xi
    assert art.mask_area == 9


def test_loop_stops_at_the_cost_threshold(mlp_net):
    art = synthesize_trigger(mlp_net, 1, GradientMask(), TriggerLoopConfig(th=1e9, epochs=50))
    assert art.epochs_used == 0


def test_loop_stops_when_the_cost_stagnates(mlp_net, caplog):
    caplog.set_level(logging.WARNING, logger="app")
    target = select_target_neuron(mlp_net, 1)
    mask = np.ones(mlp_net.input_shape, dtype=np.float32)
    # a frozen image keeps the cost flat
    cfg = TriggerLoopConfig(lr=0.0, epochs=200, stagnation_patience=5)
    art = generate_trigger(mlp_net, target, mask, cfg, initial_image=random_initial_image(mlp_net.input_shape, 0))
    assert art.stagnated
    assert art.epochs_used == 5
    assert art.final_cost == art.initial_cost
    assert art.threshold == art.final_value - art.xi
    assert any("has not decreased" in r.getMessage() for r in caplog.records)


def test_loop_config_validation():
    with pytest.raises(ValidationError):
        TriggerLoopConfig(val_min=0.3, val_max=0.3)
    with pytest.raises(ValidationError):
        TriggerLoopConfig(epochs=0)


def test_empty_or_misshaped_mask(mlp_net):
    target = TargetNeuron(layer_index=1, neuron_index=0)
    with pytest.raises(InputError):
        generate_trigger(mlp_net, target, np.zeros(mlp_net.input_shape))
    with pytest.raises(InputError):
        generate_trigger(mlp_net, target, np.ones((3, 3, 1)))


# ---------------- Application and statistics ----------------

def test_stamp_and_noise_application():
    mask = np.zeros((2, 2, 1))
    mask[0, 0, 0] = 1
    trigger = np.zeros((2, 2, 1))
    trigger[0, 0, 0] = 0.2
    image = np.full((2, 2, 1), 0.5)

    stamped = apply_trigger(image, _artifact(trigger, mask, "stamp"))
    np.testing.assert_allclose(stamped[..., 0], [[0.2, 0.5], [0.5, 0.5]])
    noisy = apply_trigger(image, _artifact(trigger, mask, "noise"))
    np.testing.assert_allclose(noisy[..., 0], [[0.7, 0.5], [0.5, 0.5]])
    bright = apply_trigger(np.full((3, 2, 2, 1), 0.95), _artifact(trigger, mask, "noise"))
    assert bright.shape == (3, 2, 2, 1) and bright.max() == 1.0

    with pytest.raises(InputError):
        apply_trigger(np.zeros((3, 3, 1)), _artifact(trigger, mask))


def test_exceed_counts_with_an_unbeatable_and_a_trivial_threshold(mlp_net, images_4x4):
    mask = np.zeros(mlp_net.input_shape)
    mask[0, 0, 0] = 1
    trigger = mask * 0.3
    never = evaluate_exceed(mlp_net, _artifact(trigger, mask, threshold=np.inf), images_4x4)
    assert never.exceed_original == never.exceed_modified == 0
    always = evaluate_exceed(mlp_net, _artifact(trigger, mask, threshold=-np.inf), images_4x4)
    assert always.exceed_original == always.exceed_modified == len(images_4x4)
    assert always.rho == 0
    assert always.conditions == [False, False, True]


def test_stealth_criteria():
    criteria = StealthCriteria()
    assert criteria.check(0, 980, 1000) == [True, True, True]
    assert criteria.check(20, 980, 1000) == [True, False, True]
    assert criteria.check(0, 900, 1000) == [True, True, False]


def test_s_is_zero_outside_the_gradient_support():
    net = lenet(seed=0)
    target = select_target_neuron(net, 1)
    mask = square_mask(net.input_shape, 4, "top-left")
    art = _artifact(np.zeros(net.input_shape), mask, target=target)
    art.initial_image = random_initial_image(net.input_shape, 0)
    assert compute_s(net, target, art) == 0.0


def test_s_is_positive_exactly_when_the_target_starts_active(mlp_net):
    art = synthesize_trigger(mlp_net, 1, GradientMask(), TriggerLoopConfig(epochs=5))
    assert (compute_s(mlp_net, art.target, art) > 0) == (art.initial_value > 0)


def test_artifact_round_trip(tmp_path, mlp_net):
    art = synthesize_trigger(mlp_net, 1, SquareMask(side=2, corner="bottom-left"), TriggerLoopConfig(epochs=5, mode="noise"))
    loaded = load_artifact(save_artifact(art, tmp_path / "trigger.bin"))
    np.testing.assert_array_equal(loaded.trigger, art.trigger)
    np.testing.assert_array_equal(loaded.mask, art.mask)
    np.testing.assert_array_equal(loaded.initial_image, art.initial_image)
    assert loaded.target == art.target
    assert loaded.mode == "noise"
    assert loaded.threshold == pytest.approx(art.threshold)
    assert loaded.mask_mode == "square:2,bottom-left"
