"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A numeric or structural argument is outside its allowed range."""


class InvalidStateError(RuntimeError):
    """An operation was applied to an object in the wrong state."""


class UndefinedEstimatorError(ArithmeticError):
    """An estimator is undefined for the given counts (e.g. a zero survivor count)."""


class ResolutionError(ValueError):
    """A truncation depth is finer than the lattice can resolve."""


class ExtinctionError(RuntimeError):
    """Every particle of an ensemble died at some shell."""

    def __init__(self, shell, message=None):
        self.shell = shell
        super().__init__(message or f"ensemble went extinct at shell {shell}")


class CoordinateOverflowError(OverflowError):
    """A lattice coordinate left the packable range."""


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DataError(ValueError):
    """An artifact failed to parse; message names the offending field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
