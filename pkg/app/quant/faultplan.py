"""FaultPlan handling: ordered bit flips, their file format and validation."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, List

from pydantic import TypeAdapter, ValidationError

from app.errors import ConfigurationError, InputError
from app.quant.quantize import BitFlip, QuantizedNetwork, apply_bitflip

FaultPlan = List[BitFlip]
_PLAN = TypeAdapter(List[BitFlip])


def validate_fault_plan(qnet: QuantizedNetwork, plan: Iterable[BitFlip]) -> None:
    """
    Raises:
        ConfigurationError: if a flip names an absent parameter or an out-of-range element.
    """
    for pos, flip in enumerate(plan):
        qp = qnet.params.get(flip.param_id)
        if qp is None:
            raise ConfigurationError(f"fault #{pos}: parameter {flip.param_id!r} does not exist in the network")
        if flip.flat_index >= qp.codes.size:
            raise ConfigurationError(
                f"fault #{pos}: index {flip.flat_index} out of range for {flip.param_id} ({qp.codes.size} elements)"
            )


def apply_fault_plan(qnet: QuantizedNetwork, plan: Iterable[BitFlip]) -> QuantizedNetwork:
    out = qnet
    for flip in plan:
        out = apply_bitflip(out, flip)
    return out


def undo_fault_plan(qnet: QuantizedNetwork, plan: Iterable[BitFlip]) -> QuantizedNetwork:
    """Re-apply the flips in reverse order; XOR makes this the exact inverse."""
    return apply_fault_plan(qnet, list(plan)[::-1])


def dump_fault_plan(plan: Iterable[BitFlip]) -> list:
    return [flip.model_dump() for flip in plan]


def write_fault_plan(plan: Iterable[BitFlip], path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(dump_fault_plan(plan), indent=2) + "\n", encoding="utf-8")
    return p


def read_fault_plan(path: str | Path) -> FaultPlan:
    """
    Read a FaultPlan: either a bare JSON array of flips or an attack trace
    whose ``flips`` key holds that array.

    Raises:
        InputError: if the file is not a valid plan.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read fault plan {path}: {e}") from e
    if isinstance(doc, dict):
        doc = doc.get("flips")
    try:
        return _PLAN.validate_python(doc)
    except ValidationError as e:
        raise InputError(f"invalid fault plan {path}: {e}") from e
