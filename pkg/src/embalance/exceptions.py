"""Exception hierarchy.

Every numerical failure the library can detect is raised as a subclass of
:class:`EmbalanceError`, so callers can separate "the method does not apply
here" from programming errors.
"""


class EmbalanceError(Exception):
    """Base class for all library errors."""


class ConfigError(EmbalanceError, ValueError):
    """Invalid experiment or solver configuration."""


class NumericalError(EmbalanceError, ArithmeticError):
    """Base class for failures of a numerical procedure."""


class StepLimitExceeded(NumericalError):
    """The integrator used up ``max_steps`` before reaching the end time."""


class NonFiniteState(NumericalError):
    """A trajectory produced NaN/Inf or collapsed its step size.

    Usually a finite-time blow-up, e.g. a backward-in-time solution of a
    dissipative system or an impulse that leaves the region of attraction.
    """

    def __init__(self, message, time=None, member=None):
        super().__init__(message)
        self.time = time
        self.member = member


class PotentialOverflow(NumericalError):
    """A diode exponent exceeded the overflow guard."""


class UnstableMatrix(NumericalError):
    """A Lyapunov equation was given a matrix with a non-stable eigenvalue."""


class LyapunovResidualError(NumericalError):
    """The Lyapunov solution failed its residual check."""


class IllConditioned(NumericalError):
    """A matrix that must be inverted has condition number above the limit."""

    def __init__(self, message, cond=None, time=None):
        super().__init__(message)
        self.cond = cond
        self.time = time


class NilpotencyError(NumericalError):
    """A bilinear coupling matrix is not nilpotent."""


class DegenerateGramian(NumericalError):
    """An empirical gramian came out identically zero."""


class RankDeficient(NumericalError):
    """Fewer Hankel singular values than the requested order are nonzero."""


class GridMismatch(EmbalanceError, ValueError):
    """Two trajectories were compared on different time grids."""
