"""Balance point: the unconstrained Pareto solution that anchors the preference regions."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from psst.config import DEFAULT_CONFIG, SolverConfig
from psst.descent import descend_to_pareto
from psst.moo_core import ParameterVector, ParetoPoint, ProblemDefinition, objective_angle
from psst.preference import PreferenceVector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BalanceResult:
    point: ParetoPoint
    pi0: float
    u0: PreferenceVector


def find_balance_point(
    problem: ProblemDefinition,
    theta0: ParameterVector,
    config: SolverConfig = DEFAULT_CONFIG,
) -> BalanceResult:
    """Unconstrained descent from theta0; the angle of the result is pi0.

    Raises:
        NonConvergenceError: The descent did not reach stationarity_tol.
    """
    point = descend_to_pareto(problem, theta0, None, config)
    pi0 = objective_angle(point.losses)
    logger.info(f"Balance point after {point.iters_used} iterations: pi0={pi0:.6f} "
                f"losses={np.array2string(point.losses, precision=6)}")
    return BalanceResult(point=point, pi0=pi0, u0=PreferenceVector.from_angle(pi0))


def multi_start_balance(
    problem: ProblemDefinition,
    seeds: Sequence[int],
    config: SolverConfig = DEFAULT_CONFIG,
) -> List[BalanceResult]:
    """Balance points from several random initializations (one per seed)."""
    results = []
    for seed in seeds:
        rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
        results.append(find_balance_point(problem, problem.initial_theta(rng), config))
    return results


def balance_summary(results: Sequence[BalanceResult], target: float = math.pi / 4,
                    tolerance: float = 0.05) -> dict:
    angles = np.array([r.pi0 for r in results], dtype=np.float64)
    within = int(np.sum(np.abs(angles - target) <= tolerance))
    return {
        "runs": int(angles.size),
        "mean_pi0": float(angles.mean()) if angles.size else math.nan,
        "std_pi0": float(angles.std()) if angles.size else math.nan,
        "target": target,
        "tolerance": tolerance,
        "within": within,
    }
