"""Exception hierarchy shared by the estimation, sampling and CLI layers."""


class RobpcrError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(RobpcrError, ValueError):
    """An argument lies outside the domain of a function."""


class InputError(RobpcrError, ValueError):
    """Malformed user data (CSV cells, shapes, configuration)."""


class DesignError(RobpcrError, ValueError):
    """A design matrix or dependent vector violates a required structure."""


class DegenerateModelError(RobpcrError):
    """A model has at least as many coefficients as observations."""


class ExactFitError(RobpcrError):
    """Zero residual sum of squares; the model log weight is undefined."""


class DegenerateScaleError(RobpcrError):
    """A column (or sample) has no spread, so it cannot be standardized.

    Attributes
    ----------
    column : int or None
        Offending column index, when the data is a matrix.
    """

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class ConvergenceError(RobpcrError):
    """An optimizer exhausted its iteration budget.

    Attributes
    ----------
    best : object
        Best-so-far result, so callers may still inspect or use it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class TuningError(RobpcrError):
    """Proposal tuning failed; ``diagnostics`` holds the evidence."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
