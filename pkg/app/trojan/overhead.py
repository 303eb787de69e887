"""Transistor-count estimate of the Trojan circuitry."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel

from app.errors import InputError

# one inverter (2) plus one 2-way multiplexer (16) per flipped bit
MUX_INV_PER_FLIP = 18
COMPARATOR_NOTE = "comparator: one magnitude comparator on the target observable; cost depends on its bit parallelism"


class OverheadReport(BaseModel):
    flips: int
    domain: Literal["dnn", "snn"]
    mux_inv_transistors: int
    counter_transistors: Optional[int] = None
    counter_modulus: Optional[int] = None
    comparator: str = COMPARATOR_NOTE
    total: int


def counter_transistors(modulus: int) -> int:
    """Spike counter of modulus N: (N - 2) * 6 for the AND gates plus (N * 4) * 4 for the T flip-flops."""
    and_gates = (modulus - 2) * 6
    flip_flops = (modulus * 4) * 4
    return and_gates + flip_flops


def overhead(
    flips: int,
    domain: Literal["dnn", "snn"] = "dnn",
    counter_modulus: Optional[int] = None,
    timesteps: Optional[int] = None,
) -> OverheadReport:
    """
    Raises:
        InputError: for ``flips < 1``, a missing or too small SNN counter modulus,
            or a modulus that cannot count a full ``timesteps`` window.
    """
    if flips < 1:
        raise InputError("the Trojan needs at least one flipped bit")
    mux = MUX_INV_PER_FLIP * flips
    if domain == "dnn":
        return OverheadReport(flips=flips, domain=domain, mux_inv_transistors=mux, total=mux)
    if domain != "snn":
        raise InputError(f"unknown domain {domain!r}")
    if counter_modulus is None:
        raise InputError("the spiking Trojan needs a counter modulus")
    if counter_modulus < 3:
        raise InputError(f"counter modulus must be at least 3, got {counter_modulus}")
    if timesteps is not None and counter_modulus < timesteps:
        raise InputError(f"a modulus-{counter_modulus} counter cannot count a {timesteps}-step window")
    counter = counter_transistors(counter_modulus)
    return OverheadReport(
        flips=flips,
        domain=domain,
        mux_inv_transistors=mux,
        counter_transistors=counter,
        counter_modulus=counter_modulus,
        total=mux + counter,
    )
