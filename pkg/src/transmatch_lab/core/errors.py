"""
Domain exceptions for the few-shot pipeline.

Every failure the library raises on purpose derives from TransMatchError, so
callers (the CLI in particular) can map failures to exit codes without
catching unrelated exceptions.
"""

from __future__ import annotations

from typing import List, Optional


class TransMatchError(Exception):
    """Base class for all domain errors."""
    pass


class ConfigurationError(TransMatchError, ValueError):
    """Invalid configuration, counts, names or parameter ranges."""
    pass


class DatasetError(ConfigurationError):
    """A dataset directory or manifest cannot be read."""
    pass


class CheckpointError(ConfigurationError):
    """A checkpoint is missing or was written by an incompatible format version."""
    pass


class SamplingError(TransMatchError):
    """
    Raised when an episode cannot be drawn from the available examples.

    Attributes:
        class_id: Source class whose pool was exhausted (None if not class-specific)
    """

    def __init__(self, message: str, class_id: Optional[int] = None):
        super().__init__(message)
        self.class_id = class_id


class ContractError(TransMatchError, ValueError):
    """Shape, dimensionality or way mismatch between collaborating objects."""
    pass


class DegenerateVectorError(ContractError):
    """A vector is too close to zero to be normalized."""
    pass


class DegenerateClassError(DegenerateVectorError):
    """
    The mean support embedding of a class vanished during imprinting.

    Attributes:
        class_index: Episode-local class index (0..N-1)
    """

    def __init__(self, class_index: int, norm: float):
        super().__init__(
            f"Class {class_index}: mean support embedding has norm {norm:.3e}, "
            f"cannot imprint a direction"
        )
        self.class_index = class_index
        self.norm = norm


class DivergenceError(TransMatchError):
    """
    Training produced a non-finite loss.

    Attributes:
        stage: Which loop diverged (e.g. "pretrain", "transmatch")
        epoch: Zero-based epoch index
        step: Zero-based step index within the epoch
        learning_rate: Learning rate in effect at the failing step
        loss_trace: Losses observed so far (per epoch means)
    """

    def __init__(
        self,
        stage: str,
        epoch: int,
        step: int,
        learning_rate: float,
        loss_trace: Optional[List[float]] = None
    ):
        self.stage = stage
        self.epoch = epoch
        self.step = step
        self.learning_rate = learning_rate
        self.loss_trace = list(loss_trace or [])
        super().__init__(
            f"{stage}: non-finite loss at epoch {epoch}, step {step} "
            f"(lr={learning_rate:g}); epoch losses so far: {self.loss_trace}"
        )


class StatisticsError(TransMatchError):
    """Not enough records to compute the requested statistic."""
    pass
