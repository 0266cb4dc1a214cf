import math
import os
import sys

PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from psst.errors import DegenerateInputError  # noqa: E402
from psst.moo_core import cos_angle  # noqa: E402
from psst.preference import (  # noqa: E402
    PreferenceVector,
    Subregion,
    activated_sets,
    constraint_gradients,
    constraint_values,
    cos_angle_partials,
    locate_region,
    make_preference_vectors,
    make_subregions,
)
from psst.problems import QuadraticProblem, ToyMlpProblem, TwoPeakProblem  # noqa: E402


def test_preference_vectors_increase_to_the_auxiliary_axis():
    for pi0 in (0.0, 0.3, math.pi / 4, 1.5):
        for k in (1, 2, 5, 9):
            vectors = make_preference_vectors(pi0, k)
            angles = [v.angle for v in vectors]
            assert len(vectors) == k + 1
            assert angles[0] == pi0
            assert all(a < b for a, b in zip(angles, angles[1:]))
            assert abs(angles[-1] - math.pi / 2) <= 1e-12
            assert vectors[-1].unit == (0.0, 1.0)


@pytest.mark.parametrize("pi0, k", [(0.3, 0), (math.pi / 2, 3), (-0.1, 3)])
def test_preference_vectors_reject_bad_input(pi0, k):
    with pytest.raises(DegenerateInputError):
        make_preference_vectors(pi0, k)


def test_preference_vector_unit_check():
    with pytest.raises(DegenerateInputError):
        PreferenceVector(angle=0.5, unit=(1.0, 1.0))


def test_region_partition():
    pi0 = 0.4
    regions = make_subregions(pi0, 5)
    rng = np.random.default_rng(0)
    for phi in rng.uniform(pi0, math.pi / 2, size=2000):
        radius = rng.uniform(0.1, 5.0)
        losses = radius * np.array([math.cos(phi), math.sin(phi)])
        inside = [r.index for r in regions if max(constraint_values(losses, r)) <= 0.0]
        assert len(inside) == 1
        assert locate_region(losses, regions) == inside[0]


def test_shared_boundary_goes_to_lower_index():
    regions = make_subregions(0.0, 2)
    assert regions[0].hi.angle == math.pi / 4
    assert locate_region([1.0, 1.0], regions) == 0
    assert locate_region([0.0, 1.0], regions) == 1
    assert locate_region([1.0, 0.0], make_subregions(0.2, 2)) is None
    assert locate_region([1.0, 0.0], make_subregions(0.2, 2), tol=0.3) == 0
    assert regions[1].contains_angle(math.pi / 4)
    assert not regions[1].contains_angle(0.7) and regions[1].contains_angle(0.7, tol=0.1)


def test_activated_sets_near_boundaries():
    region = Subregion(index=3, lo=PreferenceVector.from_angle(0.5), hi=PreferenceVector.from_angle(1.0))
    on_lo = np.array([math.cos(0.5), math.sin(0.5)])
    assert activated_sets(on_lo, region, 1e-3).q_active == frozenset({3})
    assert not activated_sets(on_lo, region, 1e-3).r_active
    middle = np.array([math.cos(0.75), math.sin(0.75)])
    assert activated_sets(middle, region, 1e-3).empty
    beyond = np.array([math.cos(1.2), math.sin(1.2)])
    assert activated_sets(beyond, region, 1e-3).r_active == frozenset({3})


def test_axis_boundaries_never_activate():
    region = Subregion(index=0, lo=PreferenceVector.from_angle(0.0), hi=PreferenceVector.from_angle(math.pi / 2))
    assert activated_sets([1.0, 0.0], region, 1e-3).empty
    assert activated_sets([0.0, 1.0], region, 1e-3).empty


def test_cos_angle_partials_scale_inversely():
    losses = np.array([0.7, 1.3, 0.4])
    for c in (0.5, 3.0, 40.0):
        assert np.allclose(cos_angle_partials(c * losses), cos_angle_partials(losses) / c, rtol=1e-12, atol=0)


def _fd_cos_gradient(problem, theta, eps=1e-6):
    grad = np.zeros(problem.dim)
    for j in range(problem.dim):
        step = np.zeros(problem.dim)
        step[j] = eps
        grad[j] = (cos_angle(problem.evaluate(theta + step)) - cos_angle(problem.evaluate(theta - step))) / (2 * eps)
    return grad


@pytest.mark.parametrize("problem", [
    QuadraticProblem.symmetric(6),
    QuadraticProblem.orthant(5, 3),
    TwoPeakProblem(5),
    ToyMlpProblem(input_dim=4, hidden=6, samples=64),
], ids=["quadratic", "quadratic-3", "twopeak", "mlp"])
def test_constraint_gradients_match_finite_differences(problem):
    rng = np.random.default_rng(5)
    region = make_subregions(0.3, 2)[0]
    for _ in range(3):
        theta = problem.initial_theta(rng) + 0.3 * rng.standard_normal(problem.dim)
        grad_q, grad_r = constraint_gradients(problem, theta, region)
        expected = _fd_cos_gradient(problem, theta)
        assert np.linalg.norm(grad_q - expected) <= 1e-5 * np.linalg.norm(expected)
        assert np.array_equal(grad_r, -grad_q)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
