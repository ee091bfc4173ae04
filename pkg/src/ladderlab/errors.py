"""Exception hierarchy shared by all ladderlab modules."""


class LadderError(Exception):
    """Base class for every error raised by ladderlab."""


class DimensionError(LadderError, ValueError):
    """Array shapes do not fit together."""


class SingularityError(LadderError, ArithmeticError):
    """A matrix that must be positive definite is (numerically) singular.

    ``eigenvalues`` holds the offending eigenvalue(s) and ``where`` names the
    layer or matrix when known.
    """

    def __init__(self, message, eigenvalues=(), where=None):
        super().__init__(message)
        self.eigenvalues = tuple(float(v) for v in eigenvalues)
        self.where = where


class NumericError(LadderError, ArithmeticError):
    """An iterative routine failed to converge."""


class SpecError(LadderError, ValueError):
    """A network description is inconsistent."""


class ConfigError(LadderError, ValueError):
    """An experiment configuration is invalid."""


class NumericAbort(LadderError, FloatingPointError):
    """Training produced a non-finite cost or gradient."""

    def __init__(self, epoch, component):
        super().__init__(f"non-finite value in {component} at epoch {epoch}")
        self.epoch = epoch
        self.component = component
