"""
Pareto front exploration.

From a converged point theta*, a tangent of the Pareto set solves
    H(theta*) dtheta = J(theta*)^T beta,   H = sum_m lambda_m Hess L_m
with MINRES on Hessian-vector products. A step along the tangent is corrected back onto the
front by constrained descent. Each region is explored breadth-first from its own seed, and
psst_run drives the whole pipeline: balance point, regions, exploration, best point.
"""
from __future__ import annotations

import logging
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import chain
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.sparse.linalg import LinearOperator, minres

from psst.balance import BalanceResult, find_balance_point
from psst.config import DEFAULT_CONFIG, SolverConfig
from psst.descent import descend_to_pareto
from psst.errors import (
    DegenerateInputError,
    DimensionError,
    NoSolutionError,
    NullTangentError,
    PsstError,
    RunFailedError,
)
from psst.moo_core import ParameterVector, ParetoPoint, ParetoSet, ProblemDefinition
from psst.preference import Subregion, constraint_values, make_subregions

logger = logging.getLogger(__name__)

REGION_STREAM = 1


@dataclass(frozen=True, eq=False)
class TangentSolve:
    direction: NDArray[np.float64]
    residual_norm: float
    krylov_iters: int
    beta: NDArray[np.float64]
    approximate: bool = False


@dataclass(frozen=True, eq=False)
class ExplorationReport:
    sets: Tuple[ParetoSet, ...]
    best: ParetoPoint
    balance: BalanceResult
    regions: Tuple[Subregion, ...]
    total_descent_iters: int
    total_tangent_solves: int
    wall_time: float

    @property
    def points(self) -> List[ParetoPoint]:
        return [p for s in self.sets for p in s.points]


def hessian_vector(
    problem: ProblemDefinition,
    theta: ParameterVector,
    weights: ArrayLike,
    v: ArrayLike,
    fd_scale: float = 1e-5,
) -> NDArray[np.float64]:
    """sum_m weights_m Hess L_m(theta) v, exact when the problem provides it."""
    v = np.asarray(v, dtype=np.float64)
    if not np.any(v):
        return np.zeros(problem.dim)
    weights = np.asarray(weights, dtype=np.float64)
    exact = problem.hvp(theta, weights, v)
    if exact is not None:
        return np.asarray(exact, dtype=np.float64)
    eps = fd_scale * (1.0 + float(np.linalg.norm(theta))) / (1.0 + float(np.linalg.norm(v)))
    upper = weights @ problem.gradients(theta + eps * v)
    lower = weights @ problem.gradients(theta - eps * v)
    return (upper - lower) / (2.0 * eps)


def tangent_direction(
    problem: ProblemDefinition,
    point: ParetoPoint,
    beta: ArrayLike,
    config: SolverConfig = DEFAULT_CONFIG,
) -> TangentSolve:
    """Unit tangent of the Pareto set at `point` for the given beta (MINRES solve)."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (problem.tasks,):
        raise DimensionError(f"beta must have length {problem.tasks}, got shape {beta.shape}")
    norm_beta = float(np.linalg.norm(beta))
    if norm_beta == 0.0:
        raise DegenerateInputError("beta must be non-zero")
    beta = beta / norm_beta

    theta = np.array(point.theta)
    weights = np.array(point.kkt_weights)
    rhs = beta @ problem.gradients(theta)
    rhs_norm = float(np.linalg.norm(rhs))
    # At a stationary point the lambda-aligned combination is of order stationarity_tol.
    if rhs_norm <= 10.0 * config.stationarity_tol:
        raise NullTangentError(f"tangent right-hand side vanished (|rhs|={rhs_norm:.3e})")

    iterations = 0

    def count(_xk) -> None:
        nonlocal iterations
        iterations += 1

    operator = LinearOperator(
        shape=(problem.dim, problem.dim),
        matvec=lambda v: hessian_vector(problem, theta, weights, np.ravel(v)),
        dtype=np.float64,
    )
    x, info = minres(operator, rhs, rtol=config.krylov_tol, maxiter=config.krylov_max_iters, callback=count)
    residual = float(np.linalg.norm(hessian_vector(problem, theta, weights, x) - rhs))
    x_norm = float(np.linalg.norm(x))
    if x_norm == 0.0:
        raise NullTangentError("tangent solve returned a zero direction")
    approximate = info != 0 or residual > config.krylov_tol * rhs_norm
    if approximate:
        logger.debug(f"MINRES tangent approximate: info={info} residual={residual:.3e}")
    return TangentSolve(direction=x / x_norm, residual_norm=residual, krylov_iters=iterations,
                        beta=beta, approximate=approximate)


def choose_betas(weights: ArrayLike, tasks: Optional[int] = None) -> List[NDArray[np.float64]]:
    """Main-axis component orthogonal to lambda, in both signs (e_2 when e_1 is parallel)."""
    lam = np.asarray(weights, dtype=np.float64)
    tasks = lam.shape[0] if tasks is None else tasks
    if lam.shape != (tasks,):
        raise DimensionError(f"weights must have length {tasks}")
    lam_hat = lam / np.linalg.norm(lam)
    for axis in (0, 1):
        e = np.zeros(tasks)
        e[axis] = 1.0
        b = e - float(e @ lam_hat) * lam_hat
        norm = float(np.linalg.norm(b))
        if norm > 1e-12:
            b = b / norm
            return [b, -b]
    raise DegenerateInputError(f"cannot build a beta orthogonal to {lam.tolist()}")


def _inside(losses: ArrayLike, region: Optional[Subregion], eps: float) -> bool:
    if region is None:
        return True
    try:
        q, r = constraint_values(losses, region)
    except DegenerateInputError:
        return False
    return q <= eps and r <= eps


def _expand(
    problem: ProblemDefinition,
    point: ParetoPoint,
    region: Optional[Subregion],
    config: SolverConfig,
    existing: Sequence[ParetoPoint],
) -> Tuple[List[ParetoPoint], int, int]:
    accepted: List[ParetoPoint] = []
    iters = 0
    solves = 0
    for beta in choose_betas(point.kkt_weights, problem.tasks):
        solves += 1
        try:
            tangent = tangent_direction(problem, point, beta, config)
        except NullTangentError as exc:
            logger.debug(f"Skipping beta {beta}: {exc}")
            continue
        candidate = point.theta + config.expand_step * tangent.direction
        if not _inside(problem.evaluate(candidate), region, config.active_eps):
            continue
        try:
            corrected = descend_to_pareto(problem, candidate, region, config)
        except PsstError as exc:
            iters += getattr(exc, "iters_used", 0)
            logger.debug(f"Dropping candidate: {exc}")
            continue
        iters += corrected.iters_used
        if corrected.stationarity > config.stationarity_tol:
            continue
        if not _inside(corrected.losses, region, config.active_eps):
            continue
        known = chain(existing, (point,), accepted)
        if any(np.linalg.norm(corrected.losses - p.losses) < config.novelty_delta for p in known):
            continue
        accepted.append(corrected)
    return accepted, iters, solves


def expand_point(
    problem: ProblemDefinition,
    point: ParetoPoint,
    region: Optional[Subregion],
    config: SolverConfig = DEFAULT_CONFIG,
    existing: Sequence[ParetoPoint] = (),
) -> List[ParetoPoint]:
    """Up to two new front points next to `point`, one per tangent sign.

    A predicted step that leaves the region by more than active_eps is rejected before correction.
    """
    accepted, _, _ = _expand(problem, point, region, config, existing)
    return accepted


def explore_region(
    problem: ProblemDefinition,
    seed_theta: ParameterVector,
    region: Optional[Subregion],
    config: SolverConfig = DEFAULT_CONFIG,
) -> ParetoSet:
    """Descend the seed into the region, then grow the set breadth-first up to region_budget."""
    index = -1 if region is None else region.index
    try:
        seed = descend_to_pareto(problem, seed_theta, region, config)
    except PsstError as exc:
        logger.warning(f"Region {index}: seed descent failed: {exc}")
        return ParetoSet(points=(), region_index=index, descent_iters=getattr(exc, "iters_used", 0), error=str(exc))

    points = [seed]
    queue = deque([seed])
    iters = seed.iters_used
    solves = 0
    while queue and len(points) < config.region_budget:
        current = queue.popleft()
        new, used, solved = _expand(problem, current, region, config, points)
        iters += used
        solves += solved
        for p in new:
            if len(points) >= config.region_budget:
                break
            points.append(p)
            queue.append(p)
    logger.info(f"Region {index}: {len(points)} points, {iters} descent iterations, {solves} tangent solves")
    return ParetoSet(points=tuple(points), region_index=index, descent_iters=iters, tangent_solves=solves)


def region_seed(problem: ProblemDefinition, master_seed: int, index: int) -> ParameterVector:
    rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(REGION_STREAM, index)))
    return problem.initial_theta(rng)


def select_best(sets: Sequence[ParetoSet]) -> ParetoPoint:
    """Lowest main-task loss; ties go to the lower region index, then the earlier point."""
    best: Optional[ParetoPoint] = None
    for s in sorted(sets, key=lambda s: s.region_index):
        for p in s.points:
            if best is None or p.main_loss < best.main_loss:
                best = p
    if best is None:
        raise NoSolutionError("no Pareto point in any region")
    return best


def psst_run(problem: ProblemDefinition, config: SolverConfig = DEFAULT_CONFIG) -> ExplorationReport:
    """Balance point, K preference regions explored independently, best main-task point.

    Args:
        problem: Problem to explore.
        config: Solver settings; k, region_budget, master_seed, warm_start, restrict_regions and
            threads shape the run.

    Returns:
        ExplorationReport with one ParetoSet per region in region order, or a single
        unrestricted set when restrict_regions is off.

    Raises:
        RunFailedError: The balance point was not found, no region fits above it, or every
            region came back empty.
    """
    started = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence(config.master_seed))
    try:
        balance = find_balance_point(problem, problem.initial_theta(rng), config)
    except PsstError as exc:
        raise RunFailedError(f"balance point not found: {exc}") from exc

    if not config.restrict_regions:
        regions: List[Subregion] = []
        wide = config.replace(region_budget=config.region_budget * config.k)
        sets = [explore_region(problem, balance.point.theta, None, wide)]
    else:
        try:
            regions = make_subregions(balance.pi0, config.k)
        except DegenerateInputError as exc:
            raise RunFailedError(f"no preference region above the balance point: {exc}", balance=balance) from exc
        if config.warm_start:
            seeds = [balance.point.theta for _ in regions]
        else:
            seeds = [region_seed(problem, config.master_seed, r.index) for r in regions]

        def run_region(job: Tuple[ParameterVector, Subregion]) -> ParetoSet:
            return explore_region(problem, job[0], job[1], config)

        jobs = list(zip(seeds, regions))
        if config.threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=min(config.threads, len(jobs))) as pool:
                sets = list(pool.map(run_region, jobs))
        else:
            sets = [run_region(job) for job in jobs]

    if all(len(s) == 0 for s in sets):
        raise RunFailedError("every region failed", sets=sets, balance=balance)
    best = select_best(sets)
    return ExplorationReport(
        sets=tuple(sets),
        best=best,
        balance=balance,
        regions=tuple(regions),
        total_descent_iters=balance.point.iters_used + sum(s.descent_iters for s in sets),
        total_tangent_solves=sum(s.tangent_solves for s in sets),
        wall_time=time.perf_counter() - started,
    )
