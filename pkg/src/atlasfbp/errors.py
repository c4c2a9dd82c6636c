"""Exception types shared across the package."""


class AtlasFBPError(Exception):
    """Base class for package errors."""


class DomainError(AtlasFBPError):
    """An argument lies outside the mathematical domain of the operation."""


class UsageError(AtlasFBPError):
    """Inconsistent inputs (grid mismatch, coverage failure, bad config)."""


class MassOverflowError(AtlasFBPError):
    """A mass quantile exceeds the integral available on the grid.

    The caller must widen the grid window.
    """


class GridOverflowError(AtlasFBPError):
    """Profile support reached the grid window edge during a run."""


class SolverError(AtlasFBPError):
    """A numerical solve failed (bracketing, NaN guard, non-convergence)."""
