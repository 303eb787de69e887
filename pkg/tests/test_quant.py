import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from app.errors import ConfigurationError, InputError
from app.quant.faultplan import (
    apply_fault_plan,
    read_fault_plan,
    undo_fault_plan,
    validate_fault_plan,
    write_fault_plan,
)
from app.quant.quantize import BitFlip, apply_bitflip, flip_code, quantize_network, quantize_tensor
from conftest import tiny_mlp, with_random_biases

QNET = quantize_network(with_random_biases(tiny_mlp(seed=9)))
NAMES = QNET.parameter_names()

flips = st.builds(
    lambda pick, position, bit: BitFlip(
        param_id=NAMES[pick % len(NAMES)],
        flat_index=position % QNET.codes(NAMES[pick % len(NAMES)]).size,
        bit=bit,
    ),
    st.integers(0, 10**6),
    st.integers(0, 10**6),
    st.integers(0, 7),
)


def test_symmetric_codes_for_unit_range():
    qp = quantize_tensor(np.array([-1.0, 0.0, 1.0]))
    np.testing.assert_array_equal(qp.codes, [-127, 0, 127])
    assert qp.scale == pytest.approx(1 / 127)


def test_rounding_is_half_away_from_zero():
    qp = quantize_tensor(np.array([127.0, 0.5, -0.5, 1.5, -2.5]))
    np.testing.assert_array_equal(qp.codes, [127, 1, -1, 2, -3])


def test_zero_tensor_and_non_finite_values():
    qp = quantize_tensor(np.zeros(3))
    assert qp.scale == 1.0 and not qp.codes.any()
    with pytest.raises(InputError):
        quantize_tensor(np.array([1.0, np.nan]))


@settings(max_examples=50, deadline=None)
@given(values=st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=20))
def test_dequantization_error_is_at_most_half_a_step(values):
    w = np.array(values)
    qp = quantize_tensor(w)
    assert np.all(np.abs(qp.dequantize() - w) <= qp.scale / 2 + 1e-5)


def test_sign_bit_of_zero_is_minus_128():
    assert flip_code(0, 7) == -128
    assert flip_code(-128, 7) == 0
    assert flip_code(5, 0) == 4


@settings(max_examples=100, deadline=None)
@given(flip=flips)
def test_bitflip_is_an_involution(flip):
    assert apply_bitflip(apply_bitflip(QNET, flip), flip).same_codes(QNET)


@settings(max_examples=100, deadline=None)
@given(flip=flips)
def test_bitflip_touches_exactly_one_code_by_a_power_of_two(flip):
    before = QNET.codes(flip.param_id).reshape(-1).astype(np.int64)
    faulted = apply_bitflip(QNET, flip)
    after = faulted.codes(flip.param_id).reshape(-1).astype(np.int64)
    changed = np.flatnonzero(before != after)
    assert changed.tolist() == [flip.flat_index]
    delta = abs(int(after[flip.flat_index]) - int(before[flip.flat_index]))
    assert delta == (128 if flip.bit == 7 else 2 ** flip.bit)
    for name in NAMES:
        if name != flip.param_id:
            np.testing.assert_array_equal(faulted.codes(name), QNET.codes(name))


def test_bitflip_keeps_the_source_network_and_updates_its_floats():
    qnet = quantize_network(with_random_biases(tiny_mlp(seed=1)))
    snapshot = {k: v.copy() for k, v in qnet.network().params.items()}
    flip = BitFlip(param_id="dense_1/kernel", flat_index=3, bit=6)
    faulted = apply_bitflip(qnet, flip)
    for name, value in snapshot.items():
        np.testing.assert_array_equal(qnet.network().params[name], value)
    expected = faulted.codes("dense_1/kernel").reshape(-1)[3] * np.float32(qnet.params["dense_1/kernel"].scale)
    assert faulted.network().params["dense_1/kernel"].reshape(-1)[3] == pytest.approx(expected)


def test_bitflip_rejects_unknown_targets():
    with pytest.raises(InputError):
        apply_bitflip(QNET, BitFlip(param_id="nope", flat_index=0, bit=0))
    with pytest.raises(InputError):
        apply_bitflip(QNET, BitFlip(param_id=NAMES[0], flat_index=10**6, bit=0))
    with pytest.raises(ValidationError):
        BitFlip(param_id=NAMES[0], flat_index=0, bit=8)


@settings(max_examples=30, deadline=None)
@given(plan=st.lists(flips, min_size=1, max_size=6))
def test_undo_restores_the_codes(plan):
    assert undo_fault_plan(apply_fault_plan(QNET, plan), plan).same_codes(QNET)


def test_plan_validation():
    validate_fault_plan(QNET, [BitFlip(param_id=NAMES[0], flat_index=0, bit=1)])
    with pytest.raises(ConfigurationError):
        validate_fault_plan(QNET, [BitFlip(param_id="conv9/kernel", flat_index=0, bit=1)])
    with pytest.raises(ConfigurationError):
        validate_fault_plan(QNET, [BitFlip(param_id=NAMES[0], flat_index=10**6, bit=1)])


def test_plan_files(tmp_path):
    plan = [BitFlip(param_id=NAMES[0], flat_index=2, bit=7), BitFlip(param_id=NAMES[1], flat_index=0, bit=0)]
    assert read_fault_plan(write_fault_plan(plan, tmp_path / "plan.json")) == plan

    trace = tmp_path / "trace.json"
    trace.write_text('{"flips": [{"param_id": "%s", "flat_index": 2, "bit": 7}], "accuracy": [1, 0]}' % NAMES[0])
    assert read_fault_plan(trace) == plan[:1]

    bad = tmp_path / "bad.json"
    bad.write_text('[{"param_id": "x", "flat_index": -1, "bit": 0}]')
    with pytest.raises(InputError):
        read_fault_plan(bad)
