"""ExperimentConfig: one serializable document per experiment run."""

from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config import settings
from app.faultlab.search import SearchConfig
from app.faultlab.sweep import SweepConfig
from app.nn.train import TrainConfig
from app.services.config_loader import read_config_document
from app.snn.lif import LifConfig
from app.trigger.generate import TriggerLoopConfig
from app.trigger.metrics import StealthCriteria

ExperimentId = Literal[
    "train", "quantize", "sweep", "search", "trigger", "trigger-eval", "trigger-size", "trojan", "snn", "overhead",
]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TriggerSection(_Section):
    layer_index: int = Field(1, ge=1)
    mask: str = "gradient"
    loop: TriggerLoopConfig = Field(default_factory=TriggerLoopConfig)


class TriggerSizeSection(_Section):
    sides: List[int] = Field(default_factory=lambda: list(range(5, 18, 2)), min_length=1)
    corner: Literal["top-left", "top-right", "bottom-left", "bottom-right", "center"] = "bottom-right"
    layer_index: int = Field(1, ge=1)
    loop: TriggerLoopConfig = Field(default_factory=TriggerLoopConfig)


class SnnSection(_Section):
    lif: LifConfig = Field(default_factory=LifConfig)
    percentile: float = Field(99.9, gt=0, le=100)
    calibration: int = Field(100, ge=2)
    eval_images: int = Field(1000, ge=1)
    # used when no trigger artifact names the target
    layer_index: int = Field(1, ge=1)


class TrojanSection(_Section):
    mode: Literal["dnn", "snn"] = "dnn"


class OverheadSection(_Section):
    flips: int = Field(30, ge=1)
    domain: Literal["dnn", "snn"] = "dnn"
    counter_modulus: Optional[int] = None
    timesteps: Optional[int] = Field(None, ge=1)


class ExperimentConfig(_Section):
    """
    Everything one run needs. ``seed`` is mandatory and, unless a section sets
    its own, becomes the seed of training, the sweep and the trigger loop.
    """

    experiment: ExperimentId
    seed: int
    out_dir: Optional[str] = None
    out: Optional[str] = None

    dataset: Literal["mnist", "cifar10"] = "mnist"
    data_root: Optional[str] = None
    test_limit: Optional[int] = Field(None, ge=1)

    arch: Literal["mlp", "lenet", "cifar_cnn"] = "mlp"
    net: Optional[str] = None
    trigger_path: Optional[str] = None
    faults_path: Optional[str] = None

    train: TrainConfig = Field(default_factory=TrainConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    search: SearchConfig = Field(default_factory=SearchConfig)
    trigger: TriggerSection = Field(default_factory=TriggerSection)
    trigger_size: TriggerSizeSection = Field(default_factory=TriggerSizeSection)
    snn: SnnSection = Field(default_factory=SnnSection)
    trojan: TrojanSection = Field(default_factory=TrojanSection)
    overhead: OverheadSection = Field(default_factory=OverheadSection)
    stealth: StealthCriteria = Field(default_factory=StealthCriteria)

    @model_validator(mode="before")
    @classmethod
    def _propagate_seed(cls, data: Any) -> Any:
        if not isinstance(data, dict) or "seed" not in data:
            return data
        seed = data["seed"]
        out = dict(data)
        for key in ("train", "sweep"):
            section = dict(out.get(key) or {})
            section.setdefault("seed", seed)
            out[key] = section
        for key in ("trigger", "trigger_size"):
            section = dict(out.get(key) or {})
            loop = dict(section.get("loop") or {})
            loop.setdefault("seed", seed)
            section["loop"] = loop
            out[key] = section
        return out

    def document(self) -> Dict[str, Any]:
        """JSON-ready form; its hash identifies the run."""
        return self.model_dump(mode="json")


def load_experiment_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Read a config file (explicit path or NEUROATTACK_CONFIG) and merge
    ``overrides`` into it, section by section. Without any file the
    overrides alone make the document.
    """
    base = read_config_document(path) if (path or settings.config_file) else {}
    doc = merge_documents(base, overrides or {})
    return ExperimentConfig.model_validate(doc)


def merge_documents(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge_documents(out[key], value)
        else:
            out[key] = value
    return out
