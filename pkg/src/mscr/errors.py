"""Exception types shared across the package."""


class MscrError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MscrError):
    """Invalid survey geometry, quadrature, or run configuration."""


class DataError(MscrError):
    """Malformed or inconsistent input data (trap/capture files, histories)."""


class DomainError(MscrError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class NumericalError(MscrError):
    """Numerical failure with no usable result (e.g. degenerate surface)."""


class InitializationError(NumericalError):
    """Objective non-finite at the optimizer starting point."""
