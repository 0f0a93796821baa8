"""Exception and warning types shared across the package."""


class ConfigurationError(ValueError):
    """A grid, datum, or policy parameter violates its documented constraint."""


class RangeError(ValueError):
    """A query point lies outside the covered coordinate range."""


class DomainError(ValueError):
    """A formula was evaluated where it is undefined."""


class DegenerateError(ValueError):
    """An input is degenerate (zero/rank-deficient) for the requested operation."""


class OracleDomainError(ValueError):
    """A finite-difference oracle hit a nonpositive sample inside its stencil."""


class InsufficientDataError(ValueError):
    """Not enough samples/records to evaluate the requested quantity."""


class StepRejectedError(RuntimeError):
    """The implicit step did not converge; the caller should retry with smaller dt."""


class StiffnessFailureError(RuntimeError):
    """Step rejection persisted below the minimum dt; the run cannot continue."""

    def __init__(self, message: str, checkpoint_path: str | None = None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


class PrecisionWarning(UserWarning):
    """The result is returned but its accuracy guarantee is degraded."""
