"""Exception types raised across the package."""


class GBBMError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(GBBMError, ValueError):
    """An argument is outside the domain accepted by an operation."""


class StateInvalidError(GBBMError):
    """A (reduced) covariance matrix is not numerically positive definite."""


class LocalityError(GBBMError):
    """A threshold string is longer than the configured locality cutoff."""

    def __init__(self, length, max_locality):
        super().__init__(
            f"threshold string of length {length} exceeds locality cutoff {max_locality}"
        )
        self.length = length
        self.max_locality = max_locality


class ResourceLimitError(GBBMError):
    """Exact inference was requested on more modes than the configured limit."""


class NumericalError(GBBMError):
    """A computation produced values inconsistent beyond rounding."""


class TrainingDivergedError(NumericalError):
    """Loss or gradient became non-finite during optimization."""


class DatasetParseError(GBBMError, ValueError):
    """A dataset file is malformed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(GBBMError, ValueError):
    """An experiment configuration is inconsistent or incomplete."""
