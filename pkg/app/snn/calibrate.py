"""Transfer of the analog detector threshold into a spike-count threshold."""

from __future__ import annotations

import logging
import math
from typing import Tuple

import numpy as np
from pydantic import BaseModel

from app.errors import CalibrationError
from app.snn.convert import SpikingNetwork, simulate
from app.trigger.target import TargetNeuron, target_activations

logger = logging.getLogger(__name__)

MIN_R_SQUARED = 0.8


class RateFit(BaseModel):
    """Least-squares line ``rate = slope * activation + intercept``."""

    slope: float
    intercept: float
    r_squared: float
    samples: int

    def rate(self, activation: float) -> float:
        return self.slope * activation + self.intercept


def fit_rate_map(activations: np.ndarray, rates: np.ndarray) -> RateFit:
    """
    Raises:
        CalibrationError: if the activations have zero variance.
    """
    a = np.asarray(activations, dtype=np.float64).ravel()
    r = np.asarray(rates, dtype=np.float64).ravel()
    if a.size < 2 or np.var(a) == 0.0:
        raise CalibrationError("calibration activations have zero variance; the rate map is undefined")
    slope, intercept = np.polyfit(a, r, 1)
    residual = r - (slope * a + intercept)
    total = float(((r - r.mean()) ** 2).sum())
    r2 = 1.0 - float((residual ** 2).sum()) / total if total > 0 else 1.0
    return RateFit(slope=float(slope), intercept=float(intercept), r_squared=r2, samples=int(a.size))


def count_threshold_from_fit(fit: RateFit, threshold: float, timesteps: int) -> int:
    """Spike count matching ``threshold`` over the window, clamped to ``[0, timesteps]``."""
    count = math.ceil(fit.rate(threshold) * timesteps - 1e-9)
    return int(min(max(count, 0), timesteps))


def rate_threshold(
    threshold: float,
    target: TargetNeuron,
    calibration: np.ndarray,
    snet: SpikingNetwork,
) -> Tuple[int, RateFit]:
    """
    Fit the target neuron's rate against its analog activation on
    ``calibration`` and map ``threshold`` to an integer spike count.

    A fit with R^2 below 0.8 is returned but logged as a warning.

    Raises:
        CalibrationError: on a degenerate fit.
    """
    analog = target_activations(snet.source, calibration, target)
    _, record = simulate(snet, calibration)
    rates = record.neuron_counts(target.layer_index, target.neuron_index) / snet.cfg.timesteps
    fit = fit_rate_map(analog, rates)
    if fit.r_squared < MIN_R_SQUARED:
        logger.warning("weak rate fit for %s: R^2=%.3f", target.model_dump(), fit.r_squared)
    count = count_threshold_from_fit(fit, threshold, snet.cfg.timesteps)
    logger.info("analog threshold %.4f -> %d spikes of %d (R^2=%.3f)", threshold, count, snet.cfg.timesteps, fit.r_squared)
    return count, fit
