"""
Bundled multi-objective problems and verification utilities.

Problems (selected by name, see PROBLEMS):
- quadratic: L_m = sum_j s_mj (theta_j - c_mj)^2 / n, isotropic (s = 1) by default.
- twopeak:   L_1 = 1 - exp(-||theta - v||^2), L_2 = 1 - exp(-||theta + v||^2), v = 1/sqrt(n).
- mlp:       shared tanh layer with one linear head per task, fit to targets from fixed random reference networks.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from psst.config import DEFAULT_CONFIG, SolverConfig
from psst.descent import armijo_backtrack
from psst.errors import DegenerateInputError, DimensionError, FrontNotAvailableError, NonConvergenceError, StallError
from psst.moo_core import (
    ParameterVector,
    ParetoPoint,
    ProblemDefinition,
    as_parameter_vector,
    objective_angle,
)

logger = logging.getLogger(__name__)

SWEEP_STREAM = 2
MLP_STATIONARITY_TOL = 1e-2


def _check_init_scale(value: float) -> float:
    value = float(value)
    if not (value >= 0.0 and math.isfinite(value)):
        raise DegenerateInputError(f"init_scale must be a finite non-negative number, got {value}")
    return value


class QuadraticProblem(ProblemDefinition):
    """Separable quadratic tasks with minimizers c_m and diagonal curvatures s_m."""

    name = "quadratic"

    def __init__(self, centers: ArrayLike, curvatures: Optional[ArrayLike] = None, init_scale: float = 0.01):
        centers = np.array(centers, dtype=np.float64)
        if centers.ndim != 2:
            raise DimensionError(f"centers must be an (M, n) array, got shape {centers.shape}")
        super().__init__(dim=centers.shape[1], tasks=centers.shape[0])
        if curvatures is None:
            scales = np.ones_like(centers)
        else:
            scales = np.array(curvatures, dtype=np.float64)
            if scales.shape != centers.shape:
                raise DimensionError("curvatures must match the shape of centers")
            if np.any(scales <= 0):
                raise DegenerateInputError("curvatures must be positive")
        centers.setflags(write=False)
        scales.setflags(write=False)
        self.centers = centers
        self.curvatures = scales
        self.isotropic = bool(np.all(scales == 1.0))
        self.init_scale = _check_init_scale(init_scale)

    @classmethod
    def symmetric(cls, dim: int, offset: float = 1.0, init_scale: float = 0.01) -> "QuadraticProblem":
        """Centers at +offset and -offset on every coordinate; theta -> -theta swaps the two tasks."""
        a = np.full(dim, float(offset))
        return cls(np.stack([a, -a]), init_scale=init_scale)

    @classmethod
    def orthant(cls, dim: int, tasks: int, init_scale: float = 0.01) -> "QuadraticProblem":
        """One center per coordinate axis, at distance sqrt(n) from the origin."""
        if tasks > dim:
            raise DimensionError(f"orthant layout needs dim >= tasks, got dim={dim}, tasks={tasks}")
        return cls(math.sqrt(dim) * np.eye(tasks, dim), init_scale=init_scale)

    def evaluate(self, theta: ParameterVector) -> NDArray[np.float64]:
        diff = theta[None, :] - self.centers
        return (self.curvatures * diff * diff).sum(axis=1) / self.dim

    def gradient(self, theta: ParameterVector, m: int) -> NDArray[np.float64]:
        self._check_task(m)
        return 2.0 * self.curvatures[m] * (theta - self.centers[m]) / self.dim

    def gradients(self, theta: ParameterVector) -> NDArray[np.float64]:
        return 2.0 * self.curvatures * (theta[None, :] - self.centers) / self.dim

    def hvp(self, theta, weights, v):
        if self.isotropic:
            return (2.0 / self.dim) * float(np.sum(weights)) * np.asarray(v, dtype=np.float64)
        return (2.0 / self.dim) * (np.asarray(weights) @ self.curvatures) * v

    def initial_theta(self, rng: np.random.Generator) -> ParameterVector:
        return self.centers.mean(axis=0) + self.init_scale * rng.standard_normal(self.dim)

    def pareto_set(self, count: int) -> NDArray[np.float64]:
        """Minimizers of (1-mu) L_1 + mu L_2 for mu uniform in [0, 1], starting at c_1."""
        if self.tasks != 2:
            raise FrontNotAvailableError("analytic Pareto set is only available for two quadratic tasks")
        mu = np.linspace(0.0, 1.0, count)[:, None]
        s1, s2 = self.curvatures
        c1, c2 = self.centers
        return ((1.0 - mu) * s1 * c1 + mu * s2 * c2) / ((1.0 - mu) * s1 + mu * s2)

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "dim": self.dim, "tasks": self.tasks, "init_scale": self.init_scale}


class TwoPeakProblem(ProblemDefinition):
    """Two Gaussian wells at +v and -v; the Pareto set is the segment between them."""

    name = "twopeak"

    def __init__(self, dim: int, init_scale: float = 0.1):
        super().__init__(dim=dim, tasks=2)
        v = np.full(dim, 1.0 / math.sqrt(dim))
        self.peaks = np.stack([v, -v])
        self.peaks.setflags(write=False)
        self.init_scale = _check_init_scale(init_scale)

    def _offsets(self, theta: ParameterVector) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        diff = theta[None, :] - self.peaks
        return diff, np.exp(-(diff * diff).sum(axis=1))

    def evaluate(self, theta: ParameterVector) -> NDArray[np.float64]:
        _, bump = self._offsets(theta)
        return 1.0 - bump

    def gradient(self, theta: ParameterVector, m: int) -> NDArray[np.float64]:
        self._check_task(m)
        return self.gradients(theta)[m]

    def gradients(self, theta: ParameterVector) -> NDArray[np.float64]:
        diff, bump = self._offsets(theta)
        return 2.0 * bump[:, None] * diff

    def hvp(self, theta, weights, v):
        diff, bump = self._offsets(theta)
        v = np.asarray(v, dtype=np.float64)
        out = np.zeros(self.dim)
        for m in range(self.tasks):
            out += weights[m] * bump[m] * (2.0 * v - 4.0 * diff[m] * float(diff[m] @ v))
        return out

    def initial_theta(self, rng: np.random.Generator) -> ParameterVector:
        return self.init_scale * rng.standard_normal(self.dim)

    def pareto_set(self, count: int) -> NDArray[np.float64]:
        """t * v for t from 1 (task 1 optimum) down to -1."""
        t = np.linspace(1.0, -1.0, count)[:, None]
        return t * self.peaks[0]

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "dim": self.dim, "tasks": self.tasks, "init_scale": self.init_scale}


@dataclass(frozen=True)
class MlpLayout:
    """Offsets of the shared layer and task heads inside the flat parameter vector."""

    input_dim: int
    hidden: int
    tasks: int

    @property
    def shared_size(self) -> int:
        return self.input_dim * self.hidden + self.hidden

    @property
    def head_size(self) -> int:
        return self.hidden + 1

    @property
    def size(self) -> int:
        return self.shared_size + self.tasks * self.head_size

    def head_slice(self, m: int) -> slice:
        start = self.shared_size + m * self.head_size
        return slice(start, start + self.head_size)

    def unpack(self, theta: ParameterVector):
        d, h = self.input_dim, self.hidden
        W = theta[: d * h].reshape(d, h)
        b = theta[d * h: self.shared_size]
        heads = theta[self.shared_size:].reshape(self.tasks, self.head_size)
        return W, b, heads[:, :h], heads[:, h]


class ToyMlpProblem(ProblemDefinition):
    """Shared tanh backbone with per-task linear heads, one regression target per task."""

    name = "mlp"

    def __init__(self, input_dim: int = 8, hidden: int = 16, samples: int = 256, tasks: int = 2, data_seed: int = 0):
        self.layout = MlpLayout(input_dim=input_dim, hidden=hidden, tasks=tasks)
        super().__init__(dim=self.layout.size, tasks=tasks)
        self.samples = samples
        self.data_seed = data_seed
        rng = np.random.default_rng(np.random.SeedSequence(data_seed))
        X = rng.uniform(-1.0, 1.0, size=(samples, input_dim))
        targets = []
        for _ in range(tasks):
            W = rng.normal(0.0, 2.0 / math.sqrt(input_dim), size=(input_dim, hidden))
            b = rng.normal(0.0, 0.5, size=hidden)
            v = rng.normal(0.0, 1.0 / math.sqrt(hidden), size=hidden)
            targets.append(np.tanh(X @ W + b) @ v)
        self.X = X
        self.Y = np.stack(targets, axis=1)
        self.X.setflags(write=False)
        self.Y.setflags(write=False)

    def _forward(self, theta: ParameterVector):
        W, b, U, c = self.layout.unpack(theta)
        H = np.tanh(self.X @ W + b)
        residual = H @ U.T + c - self.Y
        return H, U, residual

    def evaluate(self, theta: ParameterVector) -> NDArray[np.float64]:
        _, _, residual = self._forward(theta)
        return (residual * residual).mean(axis=0)

    def _task_gradient(self, H, U, residual, m: int) -> NDArray[np.float64]:
        h = self.layout.hidden
        dy = 2.0 * residual[:, m] / self.samples
        dZ = np.outer(dy, U[m]) * (1.0 - H * H)
        grad = np.zeros(self.dim)
        grad[: self.layout.input_dim * h] = (self.X.T @ dZ).ravel()
        grad[self.layout.input_dim * h: self.layout.shared_size] = dZ.sum(axis=0)
        head = self.layout.head_slice(m)
        grad[head.start: head.start + h] = H.T @ dy
        grad[head.stop - 1] = dy.sum()
        return grad

    def gradient(self, theta: ParameterVector, m: int) -> NDArray[np.float64]:
        self._check_task(m)
        H, U, residual = self._forward(theta)
        return self._task_gradient(H, U, residual, m)

    def gradients(self, theta: ParameterVector) -> NDArray[np.float64]:
        H, U, residual = self._forward(theta)
        return np.stack([self._task_gradient(H, U, residual, m) for m in range(self.tasks)])

    def initial_theta(self, rng: np.random.Generator) -> ParameterVector:
        d, h = self.layout.input_dim, self.layout.hidden
        theta = np.zeros(self.dim)
        theta[: d * h] = rng.normal(0.0, 1.0 / math.sqrt(d), size=d * h)
        for m in range(self.tasks):
            head = self.layout.head_slice(m)
            theta[head.start: head.start + h] = rng.normal(0.0, 1.0 / math.sqrt(h), size=h)
        return theta

    def describe(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "dim": self.dim,
            "tasks": self.tasks,
            "input_dim": self.layout.input_dim,
            "hidden": self.layout.hidden,
            "samples": self.samples,
            "data_seed": self.data_seed,
        }

    def solver_defaults(self) -> Dict[str, Any]:
        # Full-batch descent on the shared backbone flattens out near 1e-3 stationarity.
        return {"stationarity_tol": MLP_STATIONARITY_TOL}


def _build_quadratic(dim: int = 10, tasks: int = 2, init_scale: float = 0.01, **_: Any) -> QuadraticProblem:
    if tasks == 2:
        return QuadraticProblem.symmetric(dim, init_scale=init_scale)
    return QuadraticProblem.orthant(dim, tasks, init_scale=init_scale)


def _build_twopeak(dim: int = 10, tasks: int = 2, init_scale: float = 0.1, **_: Any) -> TwoPeakProblem:
    if tasks != 2:
        raise DimensionError("twopeak has exactly two tasks")
    return TwoPeakProblem(dim, init_scale=init_scale)


def _build_mlp(tasks: int = 2, input_dim: int = 8, hidden: int = 16, samples: int = 256,
               data_seed: int = 0, **_: Any) -> ToyMlpProblem:
    return ToyMlpProblem(input_dim=input_dim, hidden=hidden, samples=samples, tasks=tasks, data_seed=data_seed)


PROBLEMS: Dict[str, Callable[..., ProblemDefinition]] = {
    "quadratic": _build_quadratic,
    "twopeak": _build_twopeak,
    "mlp": _build_mlp,
}


def build_problem(name: str, **sizes: Any) -> ProblemDefinition:
    """Build a bundled problem by name. Unused size keys are ignored (e.g. dim for mlp)."""
    try:
        builder = PROBLEMS[name]
    except KeyError:
        raise DimensionError(f"Unknown problem {name!r}; choose from {', '.join(PROBLEMS)}") from None
    return builder(**{k: v for k, v in sizes.items() if v is not None})


def finite_diff_gradient(problem: ProblemDefinition, theta: ParameterVector, m: int,
                         eps: float = 1e-5) -> NDArray[np.float64]:
    """Central-difference gradient of task m, one coordinate at a time."""
    if not eps > 0:
        raise DegenerateInputError(f"eps must be positive, got {eps}")
    theta = as_parameter_vector(theta, problem.dim)
    grad = np.zeros(problem.dim)
    shifted = theta.copy()
    for j in range(problem.dim):
        shifted[j] = theta[j] + eps
        upper = problem.evaluate(shifted)[m]
        shifted[j] = theta[j] - eps
        lower = problem.evaluate(shifted)[m]
        shifted[j] = theta[j]
        grad[j] = (upper - lower) / (2.0 * eps)
    return grad


def relative_error(a: ArrayLike, b: ArrayLike) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / scale


def gradient_check(problem: ProblemDefinition, trials: int, seed: int = 0) -> float:
    """Largest relative error between analytic and finite-difference gradients."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    worst = 0.0
    for _ in range(trials):
        theta = problem.initial_theta(rng)
        for m in range(problem.tasks):
            worst = max(worst, relative_error(problem.gradient(theta, m), finite_diff_gradient(problem, theta, m)))
    return worst


def gradient_threshold(problem: ProblemDefinition) -> float:
    return 1e-8 if isinstance(problem, QuadraticProblem) else 1e-5


def pareto_set_points(problem: ProblemDefinition, count: int) -> NDArray[np.float64]:
    """Analytic Pareto set in parameter space, ordered from the main-task optimum."""
    if count < 1:
        raise DimensionError(f"count must be >= 1, got {count}")
    if isinstance(problem, (QuadraticProblem, TwoPeakProblem)):
        return problem.pareto_set(count)
    raise FrontNotAvailableError(f"no analytic front for problem {problem.name!r}")


def analytic_front(problem: ProblemDefinition, count: int) -> NDArray[np.float64]:
    """`count` objective vectors along the analytic Pareto set, one row per sample."""
    return np.stack([problem.evaluate(theta) for theta in pareto_set_points(problem, count)])


def simplex_grid(points: int, tasks: int = 2) -> NDArray[np.float64]:
    """Weight vectors on the simplex: a uniform line for two tasks, Das-Dennis lattice otherwise.

    A single point is the equal-weight vector.
    """
    if points < 1:
        raise DimensionError(f"grid needs at least one point, got {points}")
    if points == 1:
        return np.full((1, tasks), 1.0 / tasks)
    if tasks == 2:
        w = np.linspace(1.0, 0.0, points)
        return np.stack([w, 1.0 - w], axis=1)
    divisions = points - 1
    bars = np.array(list(combinations(range(divisions + tasks - 1), tasks - 1)))
    edges = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), divisions + tasks - 1)])
    return (np.diff(edges, axis=1) - 1) / divisions


@dataclass(frozen=True)
class SweepReport:
    points: Tuple[ParetoPoint, ...]
    failures: Tuple[Tuple[int, str], ...]
    total_iters: int


def minimize_weighted(problem: ProblemDefinition, weights: ArrayLike, theta0: ParameterVector,
                      config: SolverConfig = DEFAULT_CONFIG) -> ParetoPoint:
    """Gradient descent on sum_m w_m L_m with the Armijo rule and stopping tolerance of the solver."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (problem.tasks,) or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise DegenerateInputError(f"weights must lie on the simplex, got {weights.tolist()}")
    theta = as_parameter_vector(theta0, problem.dim).copy()
    iters = 0
    reason = "converged"
    while True:
        grad = weights @ problem.gradients(theta)
        norm = float(np.linalg.norm(grad))
        if norm <= config.stationarity_tol:
            break
        if iters >= config.max_iters:
            reason = "max_iters"
            break
        base = float(weights @ problem.evaluate(theta))
        slope = -norm * norm

        def accept(candidate: ParameterVector, eta: float) -> bool:
            value = float(weights @ problem.evaluate(candidate))
            return math.isfinite(value) and value - base <= config.armijo_c * eta * slope

        try:
            eta = armijo_backtrack(theta, -grad, accept, config.step_init, config.backtrack_factor)
        except StallError:
            reason = "stall"
            break
        theta = theta - eta * grad
        iters += 1

    losses = problem.evaluate(theta)
    point = ParetoPoint(theta=theta, losses=losses, kkt_weights=weights, stationarity=norm,
                        angle=objective_angle(losses), region_index=None, iters_used=iters)
    if norm > config.stationarity_tol:
        raise NonConvergenceError(f"weighted descent stopped ({reason}) at gradient norm {norm:.3e}",
                                  best=point, iters_used=iters)
    return point


def scalarization_sweep(problem: ProblemDefinition, weight_grid: Sequence[ArrayLike],
                        config: SolverConfig = DEFAULT_CONFIG) -> SweepReport:
    """Minimize each weighted sum from its own seeded start; failures are recorded, not raised."""
    points: List[ParetoPoint] = []
    failures: List[Tuple[int, str]] = []
    total = 0
    for j, weights in enumerate(weight_grid):
        rng = np.random.default_rng(np.random.SeedSequence(config.master_seed, spawn_key=(SWEEP_STREAM, j)))
        try:
            point = minimize_weighted(problem, weights, problem.initial_theta(rng), config)
        except NonConvergenceError as exc:
            logger.warning(f"Sweep weight {j} did not converge: {exc}")
            failures.append((j, str(exc)))
            total += exc.iters_used
            continue
        points.append(point)
        total += point.iters_used
    return SweepReport(points=tuple(points), failures=tuple(failures), total_iters=total)
