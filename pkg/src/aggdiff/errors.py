"""Exception types shared across the package."""

from __future__ import annotations


class AggDiffError(Exception):
    """Base class for all package-specific errors."""


class InvalidMode(AggDiffError):
    """A multi-index is outside the representable range (e.g. beyond Nyquist)."""


class GridMismatch(AggDiffError):
    """Two objects live on incompatible grids or domains."""


class NotADensity(AggDiffError):
    """A field violates the nonnegativity or unit-mass requirements."""


class NoNegativeMode(AggDiffError):
    """The kernel has no negative Fourier mode; no instability exists."""


class PreconditionFailed(AggDiffError):
    """An operation's structural precondition does not hold."""


class NotABifurcationMode(AggDiffError):
    """The requested mode has a nonnegative coefficient; no bifurcation there."""


class NoTransition(AggDiffError):
    """The kernel is H-stable; no phase transition exists at any beta."""


class NoTransitionDetected(AggDiffError):
    """A sweep contains no energy crossing between flat and nontrivial states."""


class InconclusiveClassification(AggDiffError):
    """Too few usable samples near the located transition to classify it."""


class StepRejected(AggDiffError):
    """A time step exceeds the stability bound; the caller should shrink dt."""


class Diverged(AggDiffError):
    """Time stepping failed persistently even at the minimum step size."""


class BisectFailed(AggDiffError):
    """Bracketing of the mass-normalising constant failed."""


class NoConvergence(AggDiffError):
    """Fixed-point iteration hit the iteration cap before meeting tolerances.

    Carries the last iterate so callers can inspect or record it.
    """

    def __init__(self, message, state=None, residual=None, iterations=None):
        super().__init__(message)
        self.state = state
        self.residual = residual
        self.iterations = iterations


class MultiComponentUnsupported(AggDiffError):
    """The density has vacuum regions; a single global constant is not exact."""


class ConfigError(AggDiffError):
    """A run configuration is malformed; carries a pointer to the bad key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
