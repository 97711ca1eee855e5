"""Exception types shared across the package.

Every error raised deliberately by this package derives from SepbiasError, so
callers (and the CLI) can distinguish domain problems from genuine bugs.
"""


class SepbiasError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(SepbiasError, ValueError):
    """An argument lies outside its documented domain."""


class SchemaError(SepbiasError, ValueError):
    """A file does not conform to its documented schema."""


class DegenerateDatasetError(SepbiasError):
    """Generated data is missing at least one (group, label) cell."""


class DegenerateTargetError(SepbiasError):
    """A target column has no usable variation for the requested operation."""


class DegenerateLabelsError(SepbiasError):
    """A metric needs both classes present and got only one."""


class TrainingFailureError(SepbiasError):
    """Training diverged. Carries the epoch at which the loss went non-finite."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class UnsupportedArchitectureError(SepbiasError):
    """The operation needs an architecture with an internal representation."""


class IncompatibleReportsError(SepbiasError):
    """Two metric reports do not describe the same test set."""


class IntegrityError(SepbiasError):
    """A persisted run directory is missing files or internally inconsistent."""
