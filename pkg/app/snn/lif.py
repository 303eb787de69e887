"""Leaky integrate-and-fire neurons in discrete time.

``tau_m dV/dt = -V + I`` is integrated by forward Euler with internal
substeps of at most ``tau_m / 10`` inside each ``dt`` step. The spike test
runs once at the end of each step, so a neuron fires at most once per step;
a spike resets the membrane to ``v_reset``.
"""

from __future__ import annotations

import math
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class LifConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    v_thresh: float = 1.0
    v_reset: float = 0.0
    tau_m: float = Field(10.0, gt=0)
    dt: float = Field(1.0, gt=0)
    timesteps: int = Field(50, ge=1)

    @model_validator(mode="after")
    def _check_potentials(self) -> "LifConfig":
        if not self.v_thresh > self.v_reset:
            raise ValueError("v_thresh must be above v_reset")
        return self

    @property
    def substeps(self) -> int:
        return max(1, math.ceil(self.dt / (self.tau_m / 10.0) - 1e-12))

    @property
    def drive_gain(self) -> float:
        """Current per unit of normalized activation; an activation of 1 fires on every step."""
        return self.tau_m / self.dt * (self.v_thresh - self.v_reset)


def lif_step(v: np.ndarray, current: np.ndarray, cfg: LifConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Advance membranes by one ``dt``; returns (new potentials, boolean spikes)."""
    h = cfg.dt / cfg.substeps
    for _ in range(cfg.substeps):
        v = v + (h / cfg.tau_m) * (current - v)
    spikes = v >= cfg.v_thresh
    return np.where(spikes, cfg.v_reset, v), spikes


def simulate_constant_current(current: np.ndarray | float, cfg: LifConfig = LifConfig()) -> np.ndarray:
    """Spike counts over ``cfg.timesteps`` for neurons driven by constant currents, starting at ``v_reset``."""
    i = np.asarray(current, dtype=np.float64)
    v = np.full(i.shape, cfg.v_reset, dtype=np.float64)
    counts = np.zeros(i.shape, dtype=np.int64)
    for _ in range(cfg.timesteps):
        v, spikes = lif_step(v, i, cfg)
        counts += spikes
    return counts


def lif_period(current: float, cfg: LifConfig = LifConfig()) -> float:
    """
    Exact inter-spike interval, in steps, of the discrete neuron under a constant current.

    Returns ``math.inf`` when the potential never reaches threshold.
    """
    if current <= cfg.v_thresh:
        return math.inf
    decay = 1.0 - cfg.dt / cfg.substeps / cfg.tau_m
    if decay <= 0.0:
        return 1.0
    ratio = (current - cfg.v_thresh) / (current - cfg.v_reset)
    k = max(1, math.ceil(math.log(ratio) / math.log(decay) / cfg.substeps - 1e-9))

    def reached(steps: int) -> bool:
        return current + (cfg.v_reset - current) * decay ** (steps * cfg.substeps) >= cfg.v_thresh

    # float guard around the closed form
    while k > 1 and reached(k - 1):
        k -= 1
    while not reached(k):
        k += 1
    return float(k)


def lif_rate_continuous(current: float, cfg: LifConfig = LifConfig()) -> float:
    """Spikes per step of the continuous-time neuron, no refractory period."""
    if current <= cfg.v_thresh:
        return 0.0
    period_ms = cfg.tau_m * math.log((current - cfg.v_reset) / (current - cfg.v_thresh))
    return cfg.dt / period_ms if period_ms > 0 else 1.0
