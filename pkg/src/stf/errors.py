"""Exception types shared across the package."""

from __future__ import annotations


class StfError(Exception):
    """Base class for all package errors."""


class RankDeficientError(StfError):
    """Too few distinct sample times to identify the fitting coefficients."""


class EvaluationError(StfError):
    """An observation model could not be evaluated (e.g. degenerate geometry).

    The offending observation time is kept in ``time`` when known.
    """

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message if time is None else f"{message} (t={time:g})")
        self.time = time


class NoFitError(StfError):
    """A state query was made before the tracker had enough samples to fit."""


class ConfigError(StfError):
    """Invalid campaign configuration."""
