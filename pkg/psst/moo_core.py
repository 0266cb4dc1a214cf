"""
Core multi-objective types and primitives.

Conventions:
- Parameter vectors and objective vectors are float64 numpy arrays.
- Task index 0 is the main task; indices 1..M-1 are auxiliary tasks.
- The objective angle projects L onto (L_main, ||L_aux||_2), so one angle covers any M >= 2.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Iterator, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from psst.errors import DegenerateInputError, DimensionError

ParameterVector = NDArray[np.float64]
ObjectiveVector = NDArray[np.float64]

HALF_PI = math.pi / 2


def _frozen(values: ArrayLike) -> NDArray[np.float64]:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def as_parameter_vector(values: ArrayLike, dim: Optional[int] = None) -> ParameterVector:
    theta = np.asarray(values, dtype=np.float64)
    if theta.ndim != 1:
        raise DimensionError(f"Parameter vector must be 1-D, got shape {theta.shape}")
    if dim is not None and theta.shape[0] != dim:
        raise DimensionError(f"Parameter vector has length {theta.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(theta)):
        raise DegenerateInputError("Parameter vector contains NaN or Inf")
    return theta


def as_objective_vector(values: ArrayLike) -> ObjectiveVector:
    losses = np.asarray(values, dtype=np.float64)
    if losses.ndim != 1 or losses.shape[0] < 1:
        raise DimensionError(f"Objective vector must be a non-empty 1-D array, got shape {losses.shape}")
    if not np.all(np.isfinite(losses)):
        raise DegenerateInputError("Objective vector contains NaN or Inf")
    if np.any(losses < 0):
        raise DegenerateInputError(f"Objective values must be non-negative, got {losses.tolist()}")
    return losses


class ProblemDefinition(ABC):
    """A differentiable multi-objective problem.

    Implementations must be stateless after construction: evaluate/gradient are pure
    functions of theta and safe to call from several threads at once.
    """

    name: str = "problem"

    def __init__(self, dim: int, tasks: int):
        if dim < 1:
            raise DimensionError(f"dim must be >= 1, got {dim}")
        if tasks < 2:
            raise DimensionError(f"a multi-objective problem needs tasks >= 2, got {tasks}")
        self._dim = int(dim)
        self._tasks = int(tasks)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def tasks(self) -> int:
        return self._tasks

    @abstractmethod
    def evaluate(self, theta: ParameterVector) -> ObjectiveVector:
        """Return the M per-task losses at theta."""

    @abstractmethod
    def gradient(self, theta: ParameterVector, m: int) -> NDArray[np.float64]:
        """Return the gradient of task m at theta."""

    def gradients(self, theta: ParameterVector) -> NDArray[np.float64]:
        """Return the (M, n) Jacobian, one row per task."""
        return np.stack([self.gradient(theta, m) for m in range(self.tasks)])

    def hvp(self, theta: ParameterVector, weights: NDArray[np.float64],
            v: NDArray[np.float64]) -> Optional[NDArray[np.float64]]:
        """Exact weighted Hessian-vector product, or None when not available."""
        return None

    def initial_theta(self, rng: np.random.Generator) -> ParameterVector:
        return rng.standard_normal(self.dim)

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "dim": self.dim, "tasks": self.tasks}

    def solver_defaults(self) -> Dict[str, Any]:
        """SolverConfig fields this problem needs changed from the global defaults.

        Applied below the environment and explicit overrides (see SolverConfig.from_env).
        """
        return {}

    def _check_task(self, m: int) -> None:
        if not 0 <= m < self.tasks:
            raise DimensionError(f"task index {m} out of range for {self.tasks} tasks")


@dataclass(frozen=True, eq=False)
class ParetoPoint:
    theta: ParameterVector
    losses: ObjectiveVector
    kkt_weights: NDArray[np.float64]
    stationarity: float
    angle: float
    region_index: Optional[int] = None
    iters_used: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", _frozen(self.theta))
        object.__setattr__(self, "losses", _frozen(self.losses))
        weights = _frozen(self.kkt_weights)
        object.__setattr__(self, "kkt_weights", weights)
        if weights.shape != self.losses.shape:
            raise DimensionError("kkt_weights and losses must have the same length")
        if np.any(weights < -1e-12) or abs(float(weights.sum()) - 1.0) > 1e-9:
            raise DegenerateInputError(f"kkt_weights are not on the simplex: {weights.tolist()}")
        if not self.stationarity >= 0:
            raise DegenerateInputError(f"stationarity must be >= 0, got {self.stationarity}")
        if not 0.0 <= self.angle <= HALF_PI:
            raise DegenerateInputError(f"angle must lie in [0, pi/2], got {self.angle}")

    @property
    def main_loss(self) -> float:
        return float(self.losses[0])


@dataclass(frozen=True)
class ParetoSet:
    """Points found in one region, in insertion order."""

    points: Tuple[ParetoPoint, ...] = ()
    region_index: int = -1
    descent_iters: int = 0
    tangent_solves: int = 0
    error: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(self.points))

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[ParetoPoint]:
        return iter(self.points)

    @property
    def failed(self) -> bool:
        return self.error is not None


def dominates(a: ArrayLike, b: ArrayLike) -> bool:
    """True iff a is no worse than b in every task and differs somewhere."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"Cannot compare objective vectors of shapes {a.shape} and {b.shape}")
    return bool(np.all(a <= b) and np.any(a != b))


def aux_norm(losses: ArrayLike) -> float:
    losses = np.asarray(losses, dtype=np.float64)
    return float(np.linalg.norm(losses[1:]))


def rho(losses: ArrayLike) -> float:
    """Main-task share: L_main / sum of auxiliary losses."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.ndim != 1 or losses.shape[0] < 2:
        raise DimensionError("rho needs at least two tasks")
    aux = float(losses[1:].sum())
    if aux <= 0.0:
        raise DegenerateInputError("rho is undefined for a zero auxiliary loss sum")
    return float(losses[0]) / aux


def objective_angle(losses: ArrayLike) -> float:
    """Angle of (L_main, ||L_aux||) from the main-task axis, in [0, pi/2]."""
    losses = as_objective_vector(losses)
    if losses.shape[0] < 2:
        raise DimensionError("objective_angle needs at least two tasks")
    main = float(losses[0])
    aux = aux_norm(losses)
    if main == 0.0 and aux == 0.0:
        raise DegenerateInputError("objective_angle is undefined for all-zero losses")
    return math.atan2(aux, main)


def cos_angle(losses: ArrayLike) -> float:
    """cos of the objective angle, computed without the atan2 round trip."""
    losses = as_objective_vector(losses)
    main = float(losses[0])
    aux = aux_norm(losses)
    radius = math.hypot(main, aux)
    if radius == 0.0:
        raise DegenerateInputError("objective_angle is undefined for all-zero losses")
    return main / radius


def pairwise_min_distance(losses: Sequence[ArrayLike]) -> float:
    """Smallest objective-space distance between any two vectors (inf for < 2)."""
    if len(losses) < 2:
        return math.inf
    arr = np.asarray(losses, dtype=np.float64)
    diffs = arr[:, None, :] - arr[None, :, :]
    dist = np.sqrt((diffs ** 2).sum(axis=-1))
    np.fill_diagonal(dist, np.inf)
    return float(dist.min())
