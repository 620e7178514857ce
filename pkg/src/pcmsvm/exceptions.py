"""Exception hierarchy shared across the package."""


class PcmError(Exception):
    """Base class for all package errors."""


class InputError(PcmError):
    """Malformed or inconsistent caller input (dimension mismatch, bad grid, ...)."""


class DegenerateLabelsError(InputError):
    """A classification subproblem received only one class."""


class EmptyEventsError(InputError):
    """Survival data contains no uncensored events."""


class NumericalError(PcmError):
    """A numerical procedure failed (singular Hessian, probability overflow, ...)."""


class NonConvergenceError(PcmError):
    """An iterative solver hit its iteration cap.

    Carries the best iterate found so far in ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class BootstrapFailureError(PcmError):
    """Fewer than two bootstrap replicates produced a usable fit."""
