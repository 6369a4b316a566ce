"""Exception and warning types raised across the package."""


class NdpertError(Exception):
    """Base class for all package errors."""


class InvalidInput(NdpertError, ValueError):
    """Malformed, non-finite or dimensionally inconsistent input."""


class ResolventDomainError(NdpertError, ValueError):
    """The spectral parameter lies outside the half-plane where the formula converges."""

    def __init__(self, lam, bound, what="resolvent"):
        self.lam = lam
        self.bound = bound
        super().__init__(f"{what} requested at lambda={lam!r}, but Re(lambda) must exceed {bound!r}")


class ContractionFailure(NdpertError):
    """No time window on which the fixed-point map is a contraction."""


class SpectrumProximity(NdpertError):
    """A resolvent evaluation hit (numerically) the spectrum."""

    def __init__(self, lam, detail=""):
        self.lam = lam
        msg = f"lambda={lam!r} is numerically in or near the spectrum"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NoRootInWindow(NdpertError):
    """The characteristic function has no sign change in the search window."""

    def __init__(self, window, g_lo, g_hi):
        self.window = tuple(window)
        self.g_lo = g_lo
        self.g_hi = g_hi
        super().__init__(
            f"no sign change of det(I - K(lambda)) on [{window[0]}, {window[1]}]: "
            f"g(lo)={g_lo:.6g}, g(hi)={g_hi:.6g}"
        )


class FitDomainError(NdpertError, ValueError):
    """Log-linear fit attempted on nonpositive data."""


class PreconditionViolation(NdpertError):
    """A hypothesis of a constructive bound failed; ``witness`` locates it."""

    def __init__(self, message, witness=None):
        self.witness = witness
        super().__init__(message if witness is None else f"{message}: {witness}")


class StepFailure(NdpertError):
    """A time step could not be completed (singular local solve)."""


class ConsistencyWarning(UserWarning):
    """Two independently computed quantities disagree beyond tolerance."""


class GridAlignmentWarning(UserWarning):
    """Result used interpolation because a time was not a multiple of the grid step."""
