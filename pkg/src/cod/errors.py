"""Exception hierarchy shared by every module of the package."""


class CodError(Exception):
    """Base class for all package errors."""


class ValidationError(CodError, ValueError):
    """An argument violates a documented precondition."""


class InputShapeError(ValidationError):
    pass


class ConfigError(CodError, ValueError):
    """Inconsistent configuration (loss weights, projections, batching)."""


class TrainingDiverged(CodError, FloatingPointError):
    """Non-finite gradient or loss encountered during optimisation."""

    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch


class SamplingError(CodError):
    pass


class GenerationError(CodError):
    pass


class CfeNotFound(CodError):
    """No prediction flip was reached within the step budget."""


class OrientationError(CodError, ValueError):
    """Segment endpoints do not straddle the 0.5 level set."""


class UndefinedDistanceError(CodError, ValueError):
    pass


class SingularMatrixError(CodError, ArithmeticError):
    pass


class ExperimentInvalid(CodError):
    pass


class SeparationWarning(UserWarning):
    """Logistic MLE hit the weight-norm cap (data likely separable)."""
