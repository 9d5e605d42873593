"""Error taxonomy shared by every sclab module.

Each class carries the CLI exit code it maps to.
"""
from typing import Any, Dict, Optional


class SclabError(Exception):
    """Base class for all sclab errors."""

    exit_code = 1


class CapabilityError(SclabError):
    """The requested operation is not supported for this manifold or dimension."""

    exit_code = 4


class ValidationError(SclabError, ValueError):
    """Configuration or user-supplied input failed validation."""

    exit_code = 2


class ContractError(ValidationError):
    """An operation was called outside its precondition."""


class DomainError(ValidationError):
    """A numeric argument lies outside the domain of a formula."""


class RangeError(ValidationError):
    """An exponent outside the range where a statement applies."""


class ResolutionError(ContractError):
    """A grid is too coarse for the function evaluated on it."""

    def __init__(self, message: str, required_resolution: int):
        super().__init__(message)
        self.required_resolution = required_resolution


class ConditioningError(ValidationError):
    """A least-squares design cannot identify the requested parameter."""


class EmptyWindowError(SclabError):
    """Every candidate projected to zero in the window."""

    exit_code = 2


class AccuracyError(SclabError):
    """A numerical procedure did not reach its tolerance."""

    exit_code = 3


class StageError(SclabError):
    """Wraps a module error with the harness stage that raised it."""

    def __init__(self, stage: str, cause: SclabError, parameters: Optional[Dict[str, Any]] = None):
        self.stage = stage
        self.cause = cause
        self.parameters = parameters or {}
        self.exit_code = getattr(cause, "exit_code", 1)
        super().__init__(f"stage '{stage}' failed with {type(cause).__name__}: {cause} (parameters: {self.parameters})")
