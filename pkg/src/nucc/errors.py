"""Exception types raised across the package."""


class NUCCError(Exception):
    """Base class for all package errors."""


class SpecError(NUCCError, ValueError):
    """Malformed system, expression or scenario specification."""


class DomainError(NUCCError, ValueError):
    """A time argument lies outside the system domain."""


class GrowthOverflowError(NUCCError, OverflowError):
    """State norm exceeded the overflow cap during propagation.

    Attributes
    ----------
    t_blowup : float
        Time at which the cap was crossed.
    """

    def __init__(self, t_blowup, cap):
        self.t_blowup = float(t_blowup)
        self.cap = cap
        super().__init__(
            f"transition norm exceeded {cap:.3g} at t={t_blowup:.6g}; "
            "use log_norm_transition for strongly expanding systems")


class AccuracyError(NUCCError):
    """Quadrature did not reach the requested accuracy."""

    def __init__(self, estimate, tol):
        self.estimate = float(estimate)
        self.tol = float(tol)
        super().__init__(f"quadrature error estimate {estimate:.3g} exceeds tol {tol:.3g}")


class NotControllableError(NUCCError):
    """Gramian is numerically singular on the requested interval."""


class ConvergenceError(NUCCError):
    """Riccati limit in the terminal time did not settle within budget."""

    def __init__(self, gap, msg=None):
        self.gap = float(gap)
        super().__init__(msg or f"Riccati iteration did not converge (gap {gap:.3g})")


class StiffnessError(NUCCError):
    """Backward Riccati integration blew up."""


class PreconditionError(NUCCError):
    """A theorem hypothesis is not met by the supplied data.

    Attributes
    ----------
    threshold : float or None
        Required value of the offending parameter, when applicable.
    """

    def __init__(self, msg, threshold=None):
        self.threshold = threshold
        super().__init__(msg)


class UnsupportedProjectorError(NUCCError):
    """Spectrum estimation would need a nontrivial dichotomy projector."""
