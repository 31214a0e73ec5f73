"""Exception taxonomy shared across the package.

Two families matter to the command line layer: domain errors (the inputs were
readable but the computation cannot proceed) and usage/configuration errors.
Everything here derives from CrossingProfilerError so callers can catch the
whole family at once.
"""
from __future__ import annotations


class CrossingProfilerError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(CrossingProfilerError):
    """Array shapes are incompatible with the requested operation."""


class ContractError(CrossingProfilerError):
    """A documented precondition of an operation was violated."""


class ConfigError(CrossingProfilerError):
    """A configuration value is out of its documented range."""


class AlignmentError(CrossingProfilerError):
    """Peak alignment could not produce a usable window."""


class CsvParseError(CrossingProfilerError):
    """A CSV file violates the documented format.

    line_number is 1-based and counts the header as line 1.
    """

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"{message} (line {line_number})"
        super().__init__(message)
        self.line_number = line_number


class CheckpointError(CrossingProfilerError):
    """A checkpoint file is corrupt, truncated, or from an unknown version."""


class DivergenceError(CrossingProfilerError):
    """Training produced a non-finite loss.

    Carries the epoch and batch where the divergence was observed plus the
    history recorded so far, so callers can flush partial progress.
    """

    def __init__(self, epoch: int, batch: int, history=None):
        super().__init__(f"non-finite training loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.history = history if history is not None else []


class LeakageError(CrossingProfilerError):
    """A held-out crossing also appears in the training bundle."""
