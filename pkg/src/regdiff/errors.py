"""Exception hierarchy shared by all regdiff modules."""

from __future__ import annotations


class RegdiffError(Exception):
    """Base class for all library errors."""


class InputDomainError(RegdiffError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class InvalidDepthError(InputDomainError):
    pass


class InsufficientDataError(InputDomainError):
    pass


class DegenerateConfigurationError(RegdiffError):
    """Input geometry does not determine the requested model.

    ``singular_values`` holds the spectrum that triggered the rejection.
    """

    def __init__(self, message: str, singular_values=None):
        super().__init__(message)
        self.singular_values = singular_values


class PointAtInfinityError(RegdiffError):
    pass


class RegistrationFailure(RegdiffError):
    """Estimating a registration failed; ``diagnostics`` says how far it got."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class GenerationFailure(RegdiffError):
    pass
