"""Exception hierarchy for groundwave."""

from __future__ import annotations

from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from .channel import CalibrationResult


class GroundwaveError(Exception):
    """Base class for all groundwave faults."""


class InvalidGeometryError(GroundwaveError, ValueError):
    """The site geometry cannot support the requested computation."""


class CalibrationError(GroundwaveError):
    """Calibration residuals exceed the allowed bound."""

    def __init__(self, message: str, result: CalibrationResult | None = None):
        super().__init__(message)
        self.result = result


class CalibrationMissingError(GroundwaveError):
    """A run was requested without calibration for its surface."""


class CodebookMismatchError(GroundwaveError):
    """The codebooks do not fit the scenario they were handed."""


class ProtocolCorruptionError(GroundwaveError):
    """The state machine received a beam reference it does not know."""


class ConfigError(GroundwaveError):
    """The configuration document is unreadable or invalid."""


class SweepError(GroundwaveError):
    """A sweep grid point failed."""

    def __init__(self, index: int, params: dict[str, Any], cause: Exception):
        super().__init__(f"sweep point {index} {params} failed: {cause}")
        self.index = index
        self.params = params
        self.cause = cause
