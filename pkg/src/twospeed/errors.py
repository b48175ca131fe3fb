"""Exception types shared across the package."""


class TwoSpeedError(Exception):
    """Base class for all package errors."""


class ParameterError(TwoSpeedError, ValueError):
    """A parameter is outside its admissible range."""


class DomainError(TwoSpeedError, ValueError):
    """A point or time lies outside the domain where an operation is defined."""


class ValidationError(TwoSpeedError, ValueError):
    """Input data violates a structural requirement (parity, grid, shape)."""


class ConfigurationError(TwoSpeedError, ValueError):
    """A solver configuration is inconsistent, e.g. it violates the CFL bound."""


class RefusedError(TwoSpeedError):
    """An operation was refused because its applicability conditions fail.

    ``reason`` carries a short human-readable explanation.
    """

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason
