from __future__ import annotations

import logging
from pathlib import Path
from typing import List

from pydantic import BaseModel

from app.config import settings
from app.errors import ExperimentError, NeuroAttackError
from app.experiments.schemas import ExperimentConfig
from app.experiments.tasks import TASKS
from app.services.reports import config_hash, write_provenance

logger = logging.getLogger(__name__)


class RunSummary(BaseModel):
    experiment: str
    config_hash: str
    out_dir: str
    outputs: List[str]


def run_experiment(cfg: ExperimentConfig) -> RunSummary:
    """
    Execute one experiment and write its provenance record.

    Raises:
        ExperimentError: wrapping any module error, with the experiment id in the message.
    """
    doc = cfg.document()
    digest = config_hash(doc)
    out_dir = Path(cfg.out_dir or settings.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info("experiment %s seed=%d hash=%s -> %s", cfg.experiment, cfg.seed, digest[:12], out_dir)

    try:
        written = TASKS[cfg.experiment](cfg, digest, out_dir)
    except ExperimentError:
        raise
    except NeuroAttackError as e:
        raise ExperimentError(f"{cfg.experiment}: {e}") from e

    outputs = [str(p) for p in written]
    provenance = write_provenance(out_dir, cfg.experiment, cfg.seed, doc, outputs)
    outputs.append(str(provenance))
    for path in outputs:
        logger.info("wrote %s", path)
    return RunSummary(experiment=cfg.experiment, config_hash=digest, out_dir=str(out_dir), outputs=outputs)
