"""Exceptions shared across the training and persistence code."""

from __future__ import annotations

from typing import Optional


class TrainingDivergedError(RuntimeError):
    """Raised when a training loss becomes non-finite."""

    def __init__(self, phase: str, epoch: int, layer: Optional[int] = None):
        where = phase if layer is None else f"{phase} layer {layer}"
        super().__init__(f"{where}: non-finite loss at epoch {epoch}")
        self.phase = phase
        self.epoch = epoch
        self.layer = layer


class ModelFileError(ValueError):
    """Base class for model file problems."""


class MalformedModelError(ModelFileError):
    pass


class ModelVersionError(ModelFileError):
    pass


class ModelShapeError(ModelFileError):
    pass
