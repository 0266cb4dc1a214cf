"""Exception hierarchy shared by the psst package."""
from __future__ import annotations

from typing import Any, Optional


class PsstError(Exception):
    """Base class for every error raised by psst."""


class ConfigError(PsstError, ValueError):
    """Invalid solver configuration or environment override."""


class DimensionError(PsstError, ValueError):
    """Vector lengths disagree, or a required input is empty."""


class DegenerateInputError(PsstError, ValueError):
    """Input for which an angle, ratio or region is undefined."""


class StallError(PsstError):
    """Line search found no admissible step."""


class NonConvergenceError(PsstError):
    """Descent stopped above the stationarity tolerance.

    `best` holds the final iterate (a ParetoPoint) so callers can inspect or report it.
    """

    def __init__(self, message: str, best: Optional[Any] = None, iters_used: int = 0):
        super().__init__(message)
        self.best = best
        self.iters_used = iters_used


class NullTangentError(PsstError):
    """Tangent right-hand side vanished for the chosen beta."""


class NoSolutionError(PsstError):
    """No Pareto point is available to select from."""


class RunFailedError(PsstError):
    """Every region of a run failed."""

    def __init__(self, message: str, sets: Optional[list] = None, balance: Optional[Any] = None):
        super().__init__(message)
        self.sets = sets or []
        self.balance = balance


class FrontNotAvailableError(PsstError):
    """The problem has no analytic Pareto front."""
