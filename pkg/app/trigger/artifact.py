"""TriggerArtifact files: JSON metadata plus float32 mask, trigger and initial image blobs."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict

import numpy as np

from app.errors import ContainerFormatError
from app.services.container import read_container, write_container
from app.trigger.generate import TriggerArtifact
from app.trigger.target import TargetNeuron

KIND = "trigger-artifact"
_SCALARS = (
    "mode", "initial_value", "final_value", "threshold", "xi", "target_output",
    "val_min", "val_max", "epochs_used", "initial_cost", "final_cost", "stagnated",
    "mask_mode", "config",
)


def artifact_summary(artifact: TriggerArtifact) -> Dict[str, Any]:
    meta = {name: getattr(artifact, name) for name in _SCALARS}
    meta["target"] = artifact.target.model_dump()
    meta["mask_area"] = artifact.mask_area
    return meta


def save_artifact(artifact: TriggerArtifact, path: str | Path) -> Path:
    arrays = {"mask": artifact.mask, "trigger": artifact.trigger, "initial_image": artifact.initial_image}
    return write_container(path, KIND, artifact_summary(artifact), arrays)


def load_artifact(path: str | Path) -> TriggerArtifact:
    """
    Raises:
        ContainerFormatError: if the file is not a trigger artifact or misses fields.
    """
    kind, meta, arrays = read_container(path)
    if kind != KIND:
        raise ContainerFormatError(f"{path}: expected a {KIND!r} container, found {kind!r}")
    try:
        fields = {name: meta[name] for name in _SCALARS}
        return TriggerArtifact(
            mask=arrays["mask"].astype(np.float32),
            trigger=arrays["trigger"].astype(np.float32),
            initial_image=arrays["initial_image"].astype(np.float32),
            target=TargetNeuron.model_validate(meta["target"]),
            **fields,
        )
    except KeyError as e:
        raise ContainerFormatError(f"{path}: artifact field {e} missing") from e
