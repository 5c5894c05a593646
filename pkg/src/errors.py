"""Exception hierarchy for the LDDMD library.

Every concrete error also derives from the closest builtin so callers that only
know about ``ValueError`` or ``RuntimeError`` keep working.
"""

from typing import Any, Dict, Optional


class LddmdError(Exception):
    """Base class for all library errors."""


class ConfigurationError(LddmdError, ValueError):
    """Invalid configuration, hyperparameter or degenerate input."""


class ShapeError(LddmdError, ValueError):
    """Vector or matrix dimensions do not agree."""


class DomainError(LddmdError, ValueError):
    """Elementary function evaluated outside its domain (ln of <= 0, division by 0)."""


class TapeStateError(LddmdError, RuntimeError):
    """Backward pass requested on a tape that holds no evaluated graph for the root."""


class NonFiniteValueError(LddmdError, FloatingPointError):
    """A value that must be finite is NaN or infinite."""


class DataLoadError(LddmdError, ValueError):
    """CSV ingestion failure. ``row`` is the 1-based line number in the file, if known."""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)


class CheckpointError(LddmdError, ValueError):
    """Checkpoint could not be read or does not match the requested model."""


class CheckpointCorruptError(CheckpointError):
    """Checkpoint file is truncated or its payload digest does not match."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an unsupported format version."""


class TrainingAbortedError(LddmdError, RuntimeError):
    """Training hit a non-finite loss or gradient.

    ``last_good_parameters`` holds the parameters from the last completed
    optimizer step, ``epoch`` the epoch in which the abort happened.
    """

    def __init__(
        self,
        message: str,
        epoch: int,
        last_good_parameters: Dict[str, Any],
        loss_history: Optional[list] = None,
    ):
        super().__init__(message)
        self.epoch = epoch
        self.last_good_parameters = last_good_parameters
        self.loss_history = list(loss_history or [])


class NseUndefinedError(LddmdError, ValueError):
    """NSE denominator vanishes because the observations are constant."""
