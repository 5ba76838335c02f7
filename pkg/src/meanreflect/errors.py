"""Exception types shared across the package."""


class MeanReflectError(Exception):
    """Base class."""


class InvalidArgument(MeanReflectError, ValueError):
    pass


class ConstraintViolation(MeanReflectError):
    """A starting point or admissibility condition fails."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class NumericalFailure(MeanReflectError):
    """Root finding or a fixed-point iteration did not behave."""

    def __init__(self, message: str, residual: float | None = None, **diagnostics):
        super().__init__(message)
        self.residual = residual
        self.diagnostics = diagnostics
