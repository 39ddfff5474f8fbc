"""Exception types shared across the package."""


class BurstkitError(Exception):
    """Base class for all burstkit errors."""


class ParseError(BurstkitError, ValueError):
    """Malformed input data; message names the offending row or line."""


class ValidationError(BurstkitError, ValueError):
    """Input violates a documented invariant (e.g. count > total)."""


class EmptySeriesError(BurstkitError, ValueError):
    """An operation left a stream with no observations."""


class DegenerateSeriesError(BurstkitError, ValueError):
    """Global proportion is 0 or 1, so null variances vanish."""


class WindowError(BurstkitError, ValueError):
    """A test window around a candidate jump is empty."""


class NullConstructionError(BurstkitError, ValueError):
    """No feasible placement exists for building a permutation null."""


class SolverDivergedError(BurstkitError, RuntimeError):
    """The objective became non-finite during optimization."""


class AdmmError(BurstkitError, RuntimeError):
    """ADMM failed to reach its residual tolerances within max_iter."""

    def __init__(self, message, primal_residual, dual_residual, iterations):
        super().__init__(message)
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual
        self.iterations = iterations


class NotSpdError(BurstkitError, ValueError):
    """Banded factorization detected a non positive definite matrix."""
