"""
Preference vectors, angular subregions and their constraints.

Region i is the wedge of objective angles [pi_i, pi_{i+1}] measured from the main-task axis.
Its two constraints are
    Q_i(L) = cos(phi(L)) - cos(pi_i)       (> 0 below the wedge)
    R_i(L) = cos(pi_{i+1}) - cos(phi(L))   (> 0 above the wedge)
so the wedge is exactly {Q_i <= 0, R_i <= 0}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from psst.errors import DegenerateInputError
from psst.moo_core import (
    HALF_PI,
    ParameterVector,
    ProblemDefinition,
    as_objective_vector,
    aux_norm,
    cos_angle,
    objective_angle,
)


@dataclass(frozen=True)
class PreferenceVector:
    angle: float
    unit: Tuple[float, float]

    def __post_init__(self) -> None:
        if not 0.0 <= self.angle <= HALF_PI:
            raise DegenerateInputError(f"preference angle must lie in [0, pi/2], got {self.angle}")
        if abs(math.hypot(*self.unit) - 1.0) > 1e-12:
            raise DegenerateInputError(f"preference vector is not unit length: {self.unit}")

    @classmethod
    def from_angle(cls, angle: float) -> "PreferenceVector":
        if angle >= HALF_PI:
            # cos(pi/2) is 6e-17 in floating point; the axis is exact.
            return cls(angle=HALF_PI, unit=(0.0, 1.0))
        return cls(angle=angle, unit=(math.cos(angle), math.sin(angle)))

    @property
    def cos(self) -> float:
        return self.unit[0]


@dataclass(frozen=True)
class Subregion:
    index: int
    lo: PreferenceVector
    hi: PreferenceVector

    def __post_init__(self) -> None:
        if not self.lo.angle < self.hi.angle <= HALF_PI:
            raise DegenerateInputError(
                f"region {self.index} is empty: [{self.lo.angle}, {self.hi.angle}]"
            )

    def contains_angle(self, angle: float, tol: float = 0.0) -> bool:
        return self.lo.angle - tol <= angle <= self.hi.angle + tol


@dataclass(frozen=True)
class ActiveSets:
    q_active: FrozenSet[int] = field(default_factory=frozenset)
    r_active: FrozenSet[int] = field(default_factory=frozenset)

    @property
    def empty(self) -> bool:
        return not self.q_active and not self.r_active


def make_preference_vectors(pi0: float, k: int) -> List[PreferenceVector]:
    """Return the K+1 preference vectors pi_0 .. pi_K, with pi_K = pi/2."""
    if k < 1:
        raise DegenerateInputError(f"number of regions must be >= 1, got {k}")
    if not 0.0 <= pi0 < HALF_PI:
        raise DegenerateInputError(f"balance angle must lie in [0, pi/2), got {pi0}")
    span = HALF_PI - pi0
    angles = [pi0 + (i / k) * span for i in range(k)] + [HALF_PI]
    return [PreferenceVector.from_angle(a) for a in angles]


def make_subregions(pi0: float, k: int) -> List[Subregion]:
    vectors = make_preference_vectors(pi0, k)
    return [Subregion(index=i, lo=vectors[i], hi=vectors[i + 1]) for i in range(k)]


def constraint_values(losses: ArrayLike, region: Subregion) -> Tuple[float, float]:
    c = cos_angle(losses)
    return c - region.lo.cos, region.hi.cos - c


def cos_angle_partials(losses: ArrayLike) -> NDArray[np.float64]:
    """Partial derivatives of cos(phi) with respect to each loss."""
    losses = as_objective_vector(losses)
    main = float(losses[0])
    aux = aux_norm(losses)
    r2 = main * main + aux * aux
    if r2 == 0.0:
        raise DegenerateInputError("cos(phi) has no gradient at all-zero losses")
    r3 = r2 ** 1.5
    partials = np.zeros_like(losses)
    partials[0] = aux * aux / r3
    partials[1:] = -main * losses[1:] / r3
    return partials


def constraint_gradients(
    problem: ProblemDefinition,
    theta: ParameterVector,
    region: Subregion,
    *,
    losses: Optional[ArrayLike] = None,
    grads: Optional[NDArray[np.float64]] = None,
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Gradients of Q and R in parameter space (chain rule through cos(phi))."""
    if losses is None:
        losses = problem.evaluate(theta)
    if grads is None:
        grads = problem.gradients(theta)
    grad_q = cos_angle_partials(losses) @ grads
    return grad_q, -grad_q


def activated_sets(losses: ArrayLike, region: Subregion, eps: float) -> ActiveSets:
    """Constraints within eps of violation (violated ones included).

    A boundary on the main axis (angle 0) or on the auxiliary axis (angle pi/2) is never
    active: non-negative losses cannot leave the quadrant.
    """
    q, r = constraint_values(losses, region)
    q_active = frozenset({region.index}) if q >= -eps and region.lo.angle > 0.0 else frozenset()
    r_active = frozenset({region.index}) if r >= -eps and region.hi.angle < HALF_PI else frozenset()
    return ActiveSets(q_active=q_active, r_active=r_active)


def locate_region(losses: ArrayLike, regions: Sequence[Subregion], tol: float = 0.0) -> Optional[int]:
    """Index of the region holding L, widened by tol; a shared boundary goes to the lower index."""
    angle = objective_angle(losses)
    for region in regions:
        if region.contains_angle(angle, tol):
            return region.index
    return None
