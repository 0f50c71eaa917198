"""Exception hierarchy shared by all chillopt modules."""

from __future__ import annotations

from typing import Optional


class ChillOptError(Exception):
    """Base class for every error raised on purpose by the toolkit."""


class ConfigError(ChillOptError, ValueError):
    """Invalid or missing configuration. Carries the offending key."""

    def __init__(self, message: str, key: Optional[str] = None, suggestion: Optional[str] = None):
        self.key = key
        self.suggestion = suggestion
        if suggestion:
            message = f"{message} (did you mean '{suggestion}'?)"
        super().__init__(message)


class DataError(ChillOptError, ValueError):
    """Input data violates a precondition (empty, misaligned, overlapping, ...)."""


class ModelError(ChillOptError):
    """Training diverged, or a persisted model cannot be used."""


class OptimizationError(ChillOptError, ValueError):
    """Invalid optimizer problem, config or candidate."""


class ExperimentError(ChillOptError):
    """A closed-loop experiment phase failed."""

    def __init__(self, phase: str, cause: BaseException):
        self.phase = phase
        self.cause = cause
        super().__init__(f"[{phase}] {type(cause).__name__}: {cause}")
