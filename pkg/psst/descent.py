"""
Pareto descent.

- `min_norm_in_hull`: pairwise Frank-Wolfe for the min-norm point of a convex hull.
- `mgda_direction` / `constrained_direction`: common descent directions, without and with
  the activated region constraints.
- `line_search`: Armijo backtracking on the worst task decrease, with a region guard.
- `descend_to_pareto`: iterate until the direction norm drops below the stationarity tolerance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, NamedTuple, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from psst.config import DEFAULT_CONFIG, SolverConfig
from psst.errors import DegenerateInputError, DimensionError, NonConvergenceError, StallError
from psst.moo_core import (
    ParameterVector,
    ParetoPoint,
    ProblemDefinition,
    as_parameter_vector,
    objective_angle,
)
from psst.preference import (
    ActiveSets,
    Subregion,
    activated_sets,
    constraint_gradients,
    constraint_values,
)

logger = logging.getLogger(__name__)

MAX_HALVINGS = 60
# Region constraints may loosen by this fraction of active_eps while a boundary point is
# polished to task-only stationarity.
POLISH_SLACK = 0.1


@dataclass(frozen=True, eq=False)
class Multipliers:
    """Hull weights split into task (omega), lower-boundary (beta) and upper-boundary (gamma) parts."""

    omega: NDArray[np.float64]
    beta: Mapping[int, float] = field(default_factory=dict)
    gamma: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = list(np.asarray(self.omega, dtype=np.float64)) + list(self.beta.values()) + list(self.gamma.values())
        if any(v < -1e-12 for v in values) or abs(sum(values) - 1.0) > 1e-9:
            raise DegenerateInputError(f"multipliers are not on the simplex: {values}")

    @property
    def constraint_mass(self) -> float:
        return float(sum(self.beta.values()) + sum(self.gamma.values()))


@dataclass(frozen=True, eq=False)
class DescentDirection:
    d: NDArray[np.float64]
    alpha: float
    multipliers: Multipliers
    active: ActiveSets = field(default_factory=ActiveSets)
    approximate: bool = False

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.d))


class HullPoint(NamedTuple):
    weights: NDArray[np.float64]
    point: NDArray[np.float64]
    approximate: bool
    iterations: int


def min_norm_in_hull(
    vectors: ArrayLike,
    tol: float = DEFAULT_CONFIG.fw_tol,
    max_iters: int = DEFAULT_CONFIG.fw_max_iters,
) -> HullPoint:
    """Min-norm element of conv(vectors).

    Pairwise Frank-Wolfe: weight moves from the worst support vertex to the best vertex with
    an exact two-vector line search. Stops on the duality gap ||p||^2 - min_i v_i.p <= tol.
    Ties pick the lowest index.

    Args:
        vectors: (k, n) array, one vector per row.
        tol: Duality-gap tolerance.
        max_iters: Frank-Wolfe iteration cap; hitting it marks the result approximate.

    Returns:
        HullPoint with the min-norm point, its simplex weights and the approximate flag.
    """
    V = np.asarray(vectors, dtype=np.float64)
    if V.ndim == 1:
        V = V[None, :]
    if V.ndim != 2 or V.shape[0] == 0:
        raise DimensionError("min_norm_in_hull needs at least one vector")
    if not np.all(np.isfinite(V)):
        raise DegenerateInputError("hull vectors contain NaN or Inf")

    G = V @ V.T
    w = np.zeros(V.shape[0])
    w[int(np.argmin(np.diag(G)))] = 1.0

    approximate = True
    steps = 0
    while True:
        Gw = G @ w
        pp = float(w @ Gw)
        t = int(np.argmin(Gw))
        if pp - Gw[t] <= tol:
            approximate = False
            break
        if steps >= max_iters:
            break
        support = np.flatnonzero(w > 0.0)
        s = int(support[np.argmax(Gw[support])])
        curvature = G[t, t] - 2.0 * G[t, s] + G[s, s]
        gamma = w[s] if curvature <= 0.0 else min((Gw[s] - Gw[t]) / curvature, w[s])
        if gamma >= w[s]:
            w[t] += w[s]
            w[s] = 0.0
        else:
            w[t] += gamma
            w[s] -= gamma
        steps += 1

    w = w / w.sum()
    if approximate:
        logger.debug(f"Frank-Wolfe stopped after {steps} steps with gap {pp - Gw[t]:.3e}")
    return HullPoint(weights=w, point=w @ V, approximate=approximate, iterations=steps)


def _direction(
    vectors: NDArray[np.float64],
    tasks: int,
    active: ActiveSets,
    config: SolverConfig,
) -> DescentDirection:
    hull = min_norm_in_hull(vectors, config.fw_tol, config.fw_max_iters)
    d = -hull.point
    alpha = min(float(np.max(vectors @ d)), 0.0)
    w = hull.weights
    beta: Dict[int, float] = {}
    gamma: Dict[int, float] = {}
    pos = tasks
    for idx in sorted(active.q_active):
        beta[idx] = float(w[pos])
        pos += 1
    for idx in sorted(active.r_active):
        gamma[idx] = float(w[pos])
        pos += 1
    multipliers = Multipliers(omega=w[:tasks].copy(), beta=beta, gamma=gamma)
    return DescentDirection(d=d, alpha=alpha, multipliers=multipliers, active=active,
                            approximate=hull.approximate)


def mgda_direction(
    problem: ProblemDefinition,
    theta: ParameterVector,
    config: SolverConfig = DEFAULT_CONFIG,
) -> DescentDirection:
    """Common descent direction d = -(min-norm point of the task gradients)."""
    theta = as_parameter_vector(theta, problem.dim)
    return _direction(problem.gradients(theta), problem.tasks, ActiveSets(), config)


def constrained_direction(
    problem: ProblemDefinition,
    theta: ParameterVector,
    region: Subregion,
    config: SolverConfig = DEFAULT_CONFIG,
) -> DescentDirection:
    """Descent direction that also decreases every activated region constraint."""
    theta = as_parameter_vector(theta, problem.dim)
    losses = problem.evaluate(theta)
    grads = problem.gradients(theta)
    active = activated_sets(losses, region, config.active_eps)
    if active.empty:
        return _direction(grads, problem.tasks, active, config)
    grad_q, grad_r = constraint_gradients(problem, theta, region, losses=losses, grads=grads)
    rows = [grads]
    if active.q_active:
        rows.append(grad_q[None, :])
    if active.r_active:
        rows.append(grad_r[None, :])
    return _direction(np.vstack(rows), problem.tasks, active, config)


def armijo_backtrack(
    theta: ParameterVector,
    d: NDArray[np.float64],
    accept: Callable[[ParameterVector, float], bool],
    start: float,
    factor: float,
) -> float:
    for k in range(MAX_HALVINGS + 1):
        eta = start * factor ** k
        if accept(theta + eta * d, eta):
            return eta
    raise StallError(f"no admissible step after {MAX_HALVINGS} backtracking steps")


def line_search(
    problem: ProblemDefinition,
    theta: ParameterVector,
    direction: DescentDirection,
    region: Optional[Subregion] = None,
    config: SolverConfig = DEFAULT_CONFIG,
    caps: Optional[Tuple[float, float]] = None,
) -> float:
    """Largest step_init * backtrack_factor^k with sufficient decrease in every task.

    With a region, a satisfied constraint stays satisfied and a violated one may not grow.

    Args:
        problem: Problem being descended.
        theta: Current iterate.
        direction: Descent direction with alpha < 0.
        region: Region whose constraints guard the step, or None.
        config: Armijo constant, backtrack factor and initial step.
        caps: Upper bounds for (Q, R) replacing the defaults (max(0, Q0), max(0, R0)).

    Returns:
        The accepted step size.

    Raises:
        StallError: alpha is not negative, or no step passed within MAX_HALVINGS halvings.
    """
    if not direction.alpha < 0.0:
        raise StallError(f"direction is not a descent direction (alpha={direction.alpha})")
    base = problem.evaluate(theta)
    if region is not None and caps is None:
        q0, r0 = constraint_values(base, region)
        caps = (max(0.0, q0), max(0.0, r0))
    if region is None:
        caps = None

    def accept(candidate: ParameterVector, eta: float) -> bool:
        losses = problem.evaluate(candidate)
        if not np.all(np.isfinite(losses)):
            return False
        if float(np.max(losses - base)) > config.armijo_c * eta * direction.alpha:
            return False
        if caps is not None:
            try:
                q, r = constraint_values(losses, region)
            except DegenerateInputError:
                return False
            if q > caps[0] or r > caps[1]:
                return False
        return True

    return armijo_backtrack(theta, direction.d, accept, config.step_init, config.backtrack_factor)


def _restore_feasibility(
    problem: ProblemDefinition,
    theta: ParameterVector,
    region: Subregion,
    config: SolverConfig,
) -> Tuple[ParameterVector, int]:
    """Move theta into the region by descending on the violated constraint alone."""
    iters = 0
    while True:
        losses = problem.evaluate(theta)
        q, r = constraint_values(losses, region)
        violation = max(q, r)
        if violation <= 0.0:
            return theta, iters
        if iters >= config.max_iters:
            raise NonConvergenceError(
                f"region {region.index} not reached within {config.max_iters} iterations",
                iters_used=iters,
            )
        grad_q, grad_r = constraint_gradients(problem, theta, region, losses=losses)
        g = grad_q if q >= r else grad_r
        gg = float(g @ g)
        if not gg > 0.0:
            raise NonConvergenceError(f"region {region.index} constraint has a zero gradient", iters_used=iters)
        start = (violation + 0.5 * config.active_eps) / gg

        def accept(candidate: ParameterVector, eta: float) -> bool:
            try:
                q_new, r_new = constraint_values(problem.evaluate(candidate), region)
            except DegenerateInputError:
                return False
            return max(q_new, r_new) <= violation - config.armijo_c * eta * gg

        try:
            eta = armijo_backtrack(theta, -g, accept, start, config.backtrack_factor)
        except StallError as exc:
            raise NonConvergenceError(f"region {region.index} not reached: {exc}", iters_used=iters) from exc
        theta = theta - eta * g
        iters += 1


def _polish_task_stationarity(
    problem: ProblemDefinition,
    theta: ParameterVector,
    region: Subregion,
    iters: int,
    config: SolverConfig,
) -> Tuple[ParameterVector, int, DescentDirection, str]:
    """Task-only descent from a constrained-stationary point until |sum lambda_m grad L_m| <= tol.

    Constraint caps are fixed at the start, POLISH_SLACK * active_eps above the current values.
    """
    q0, r0 = constraint_values(problem.evaluate(theta), region)
    slack = POLISH_SLACK * config.active_eps
    caps = (max(0.0, q0) + slack, max(0.0, r0) + slack)
    while True:
        direction = mgda_direction(problem, theta, config)
        if direction.norm <= config.stationarity_tol:
            return theta, iters, direction, "converged"
        if iters >= config.max_iters:
            return theta, iters, direction, "max_iters while polishing"
        try:
            eta = line_search(problem, theta, direction, region, config, caps=caps)
        except StallError:
            return theta, iters, direction, "stall while polishing"
        theta = theta + eta * direction.d
        iters += 1


def _kkt_weights(problem: ProblemDefinition, theta: ParameterVector,
                 direction: DescentDirection, config: SolverConfig) -> NDArray[np.float64]:
    omega = direction.multipliers.omega
    total = float(omega.sum())
    if direction.multipliers.constraint_mass > 0.0 or total <= 0.0:
        return min_norm_in_hull(problem.gradients(theta), config.fw_tol, config.fw_max_iters).weights
    return omega / total


def descend_to_pareto(
    problem: ProblemDefinition,
    theta0: ParameterVector,
    region: Optional[Subregion] = None,
    config: SolverConfig = DEFAULT_CONFIG,
) -> ParetoPoint:
    """Descend from theta0 to a Pareto-stationary point (inside `region` when given).

    A constrained-stationary point whose region constraints still carry weight is polished
    with task-only steps, so `stationarity` is always the task-only residual
    |sum_m kkt_weights_m grad L_m|.

    Args:
        problem: Problem to descend on.
        theta0: Starting parameters.
        region: Preference region to stay in, or None for unconstrained descent.
        config: Tolerances, iteration cap and line-search settings.

    Returns:
        The converged ParetoPoint.

    Raises:
        NonConvergenceError: The residual is still above stationarity_tol at a stall or at
            max_iters. The final iterate is attached as `best`.
    """
    theta = as_parameter_vector(theta0, problem.dim).copy()
    iters = 0
    if region is not None:
        theta, iters = _restore_feasibility(problem, theta, region, config)

    reason = "converged"
    while True:
        if region is None:
            direction = mgda_direction(problem, theta, config)
        else:
            direction = constrained_direction(problem, theta, region, config)
        norm = direction.norm
        if norm <= config.stationarity_tol:
            break
        if iters >= config.max_iters:
            reason = "max_iters"
            break
        try:
            eta = line_search(problem, theta, direction, region, config)
        except StallError:
            reason = "stall"
            break
        theta = theta + eta * direction.d
        iters += 1
        logger.debug(f"iter {iters}: |d|={norm:.3e} eta={eta:.3e}")

    if region is not None and reason == "converged" and direction.multipliers.constraint_mass > 0.0:
        theta, iters, direction, reason = _polish_task_stationarity(problem, theta, region, iters, config)
        norm = direction.norm

    losses = problem.evaluate(theta)
    point = ParetoPoint(
        theta=theta,
        losses=losses,
        kkt_weights=_kkt_weights(problem, theta, direction, config),
        stationarity=norm,
        angle=objective_angle(losses),
        region_index=None if region is None else region.index,
        iters_used=iters,
    )
    if norm > config.stationarity_tol:
        raise NonConvergenceError(
            f"descent stopped ({reason}) at stationarity {norm:.3e} after {iters} iterations",
            best=point,
            iters_used=iters,
        )
    return point


def stationarity_measure(
    problem: ProblemDefinition,
    theta: ParameterVector,
    config: SolverConfig = DEFAULT_CONFIG,
) -> float:
    """Norm of the min-norm point of the task gradients; zero iff Pareto-stationary."""
    theta = as_parameter_vector(theta, problem.dim)
    hull = min_norm_in_hull(problem.gradients(theta), config.fw_tol, config.fw_max_iters)
    return float(np.linalg.norm(hull.point))
