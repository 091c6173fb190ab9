"""Exception hierarchy shared by all modules."""


class PermomError(Exception):
    """Base class for library errors."""


class ValidationError(PermomError, ValueError):
    """Input failed a documented invariant."""


class StructuralError(ValidationError):
    """Party structures of two inputs do not match."""


class DomainError(ValidationError):
    """Moment data violates a feasibility inequality."""


class InfeasibleError(PermomError):
    """No candidate solution met the residual tolerance."""

    def __init__(self, message: str, best_residual: float = float("inf")):
        super().__init__(message)
        self.best_residual = best_residual


class ResourceError(PermomError):
    """A size limit would be exceeded."""


class UnsupportedError(PermomError):
    """Operation is not defined for this input (e.g. non-qubit parties)."""


class InsufficientDataError(PermomError, ValueError):
    """Too few samples for an unbiased estimator."""


class NumericalError(PermomError):
    """A linear-algebra routine failed to converge."""
