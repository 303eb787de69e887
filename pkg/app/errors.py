"""Exception hierarchy shared by every module of the lab.

Each class also derives from the closest builtin, so callers that only know
about ``ValueError`` or ``RuntimeError`` keep catching them.
"""

from __future__ import annotations

from typing import Optional


class NeuroAttackError(Exception):
    """Root of all errors raised on purpose by this package."""


class ConfigurationError(NeuroAttackError, ValueError):
    """A model, mask, fault plan or detector is inconsistent with its network."""


class InputError(NeuroAttackError, ValueError):
    """An argument is out of range or has the wrong shape."""


class NumericError(NeuroAttackError, ArithmeticError):
    """A forward or backward pass produced NaN or Inf."""

    def __init__(self, message: str, layer: Optional[str] = None):
        super().__init__(message)
        self.layer = layer


class TrainingError(NeuroAttackError, RuntimeError):
    """Training diverged."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class UnsupportedModelError(ConfigurationError):
    """The network cannot be converted to the spiking domain."""


class CalibrationError(NeuroAttackError, RuntimeError):
    """The analog-to-rate fit is degenerate."""


class DatasetFormatError(NeuroAttackError, ValueError):
    """A dataset file has a bad magic number, a bad length or an out-of-range label."""

    def __init__(self, message: str, path: str, offset: int):
        super().__init__(f"{path} @ byte {offset}: {message}")
        self.path = path
        self.offset = offset


class ContainerFormatError(NeuroAttackError, ValueError):
    """A checkpoint or artifact container is malformed."""


class ExperimentError(NeuroAttackError, RuntimeError):
    """A module error, re-raised with the experiment that triggered it."""
