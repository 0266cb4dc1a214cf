import math
import os
import sys

PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

import numpy as np  # noqa: E402
import pytest  # noqa: E402
from scipy.optimize import minimize_scalar  # noqa: E402

from psst.bench import residuals  # noqa: E402
from psst.config import SolverConfig  # noqa: E402
from psst.descent import descend_to_pareto  # noqa: E402
from psst.errors import DimensionError, NoSolutionError, NullTangentError  # noqa: E402
from psst.exploration import (  # noqa: E402
    choose_betas,
    expand_point,
    explore_region,
    hessian_vector,
    psst_run,
    region_seed,
    select_best,
    tangent_direction,
)
from psst.moo_core import ParetoPoint, ParetoSet, objective_angle, pairwise_min_distance  # noqa: E402
from psst.preference import PreferenceVector, Subregion, constraint_values  # noqa: E402
from psst.problems import QuadraticProblem, ToyMlpProblem, TwoPeakProblem, analytic_front  # noqa: E402

CURVED_CENTERS = [[1.0, 0.0], [0.0, 1.0]]
CURVED_SCALES = [[1.0, 4.0], [4.0, 1.0]]


def _front_point(problem, theta, weights):
    losses = problem.evaluate(theta)
    return ParetoPoint(theta=theta, losses=losses, kkt_weights=np.asarray(weights, dtype=np.float64),
                       stationarity=0.0, angle=objective_angle(losses))


def _curved_set(mu):
    """Minimizer of (1 - mu) L_1 + mu L_2 for the curved quadratic."""
    s1, s2 = np.array(CURVED_SCALES)
    c1, c2 = np.array(CURVED_CENTERS)
    return ((1 - mu) * s1 * c1 + mu * s2 * c2) / ((1 - mu) * s1 + mu * s2)


class ShiftedTwoPeak(TwoPeakProblem):
    name = "shifted-twopeak"

    def evaluate(self, theta):
        return super().evaluate(theta) + np.array([0.0, 5.0])


def test_choose_betas_are_orthogonal_unit_pairs():
    for weights in ([0.5, 0.5], [0.9, 0.1], [0.2, 0.3, 0.5], [1.0, 0.0]):
        betas = choose_betas(weights)
        assert len(betas) == 2
        assert np.array_equal(betas[1], -betas[0])
        assert np.linalg.norm(betas[0]) == pytest.approx(1.0)
        assert abs(betas[0] @ np.asarray(weights)) <= 1e-12
    with pytest.raises(DimensionError):
        choose_betas([0.5, 0.5], tasks=3)


def test_tangent_follows_the_pareto_segment():
    problem = QuadraticProblem.symmetric(10)
    a = problem.centers[0]
    point = _front_point(problem, 0.2 * a, [0.6, 0.4])
    axis = a / np.linalg.norm(a)
    for beta in choose_betas(point.kkt_weights):
        solve = tangent_direction(problem, point, beta)
        assert not solve.approximate
        assert np.linalg.norm(solve.direction) == pytest.approx(1.0)
        angle = math.acos(min(1.0, abs(float(solve.direction @ axis))))
        assert angle <= 1e-3


def test_lambda_aligned_beta_has_no_tangent():
    problem = QuadraticProblem.symmetric(10)
    point = _front_point(problem, 0.2 * problem.centers[0], [0.6, 0.4])
    with pytest.raises(NullTangentError):
        tangent_direction(problem, point, point.kkt_weights / np.linalg.norm(point.kkt_weights))


def test_tangent_step_error_is_second_order():
    problem = QuadraticProblem(CURVED_CENTERS, curvatures=CURVED_SCALES)
    theta = _curved_set(0.5)
    point = _front_point(problem, theta, [0.5, 0.5])
    config = SolverConfig(krylov_tol=1e-12)
    direction = tangent_direction(problem, point, choose_betas(point.kkt_weights)[0], config).direction

    etas = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    distances = []
    for eta in etas:
        stepped = theta + eta * direction

        def gap(s):
            diff = stepped - _curved_set(0.5 + s)
            return float(diff @ diff)

        best = minimize_scalar(gap, bounds=(-0.3, 0.3), method="bounded", options={"xatol": 1e-15, "maxiter": 1000})
        distances.append(math.sqrt(best.fun))
    slope = np.polyfit(np.log(etas), np.log(distances), 1)[0]
    assert slope >= 1.9


def test_expand_interior_point_gives_one_point_per_side():
    problem = QuadraticProblem.symmetric(10)
    point = descend_to_pareto(problem, 0.2 * problem.centers[0])
    new = expand_point(problem, point, None)
    assert len(new) == 2
    sides = sorted(np.sign(p.losses[0] - point.losses[0]) for p in new)
    assert sides == [-1.0, 1.0]
    for p in new:
        assert p.stationarity <= 1e-6


def test_expand_at_upper_boundary_keeps_inside():
    problem = QuadraticProblem.symmetric(10)
    point = descend_to_pareto(problem, 0.2 * problem.centers[0])
    region = Subregion(index=0, lo=PreferenceVector.from_angle(point.angle - 0.3),
                       hi=PreferenceVector.from_angle(point.angle))
    config = SolverConfig()
    new = expand_point(problem, point, region, config)
    assert len(new) <= 1
    for p in new:
        assert max(constraint_values(p.losses, region)) <= config.active_eps


def test_expand_with_large_novelty_radius_finds_nothing():
    problem = QuadraticProblem.symmetric(10)
    point = descend_to_pareto(problem, 0.2 * problem.centers[0])
    assert expand_point(problem, point, None, SolverConfig(novelty_delta=100.0)) == []


def test_explore_region_respects_budget_and_region():
    problem = QuadraticProblem.symmetric(10)
    region = Subregion(index=2, lo=PreferenceVector.from_angle(1.0), hi=PreferenceVector.from_angle(1.3))
    config = SolverConfig(region_budget=6)
    result = explore_region(problem, problem.initial_theta(np.random.default_rng(0)), region, config)
    assert 1 <= len(result) <= 6
    assert result.region_index == 2 and not result.failed
    assert result.tangent_solves > 0
    for p in result:
        assert p.region_index == 2
        assert p.stationarity <= config.stationarity_tol
        assert max(constraint_values(p.losses, region)) <= config.active_eps


def test_unreachable_region_yields_an_empty_set():
    problem = ShiftedTwoPeak(4)
    region = Subregion(index=0, lo=PreferenceVector.from_angle(0.1), hi=PreferenceVector.from_angle(0.5))
    result = explore_region(problem, np.zeros(4), region, SolverConfig(max_iters=200))
    assert len(result) == 0
    assert result.failed


@pytest.mark.parametrize("problem", [QuadraticProblem.symmetric(5), ToyMlpProblem(input_dim=3, hidden=4, samples=32)],
                         ids=["quadratic", "mlp"])
def test_hessian_vector_of_zero_is_zero(problem):
    theta = problem.initial_theta(np.random.default_rng(2))
    result = hessian_vector(problem, theta, np.full(problem.tasks, 1.0 / problem.tasks), np.zeros(problem.dim))
    assert result.shape == (problem.dim,)
    assert not np.any(result)


def test_region_budget_one_keeps_only_the_corrected_seed():
    problem = QuadraticProblem.symmetric(6)
    config = SolverConfig(k=3, region_budget=1, master_seed=8)
    report = psst_run(problem, config)
    for region, s in zip(report.regions, report.sets):
        assert len(s) == 1
        assert s.tangent_solves == 0
        seed = descend_to_pareto(problem, region_seed(problem, config.master_seed, region.index), region, config)
        assert s.points[0].theta.tobytes() == seed.theta.tobytes()
        assert s.descent_iters == seed.iters_used


def test_single_region_spans_balance_to_half_pi():
    problem = QuadraticProblem.symmetric(6)
    report = psst_run(problem, SolverConfig(k=1, region_budget=6, master_seed=2))
    assert len(report.regions) == 1 and len(report.sets) == 1
    region = report.regions[0]
    assert region.lo.angle == pytest.approx(report.balance.pi0)
    assert region.hi.angle == pytest.approx(math.pi / 2)
    assert len(report.points) >= 1
    assert all(p.angle >= report.balance.pi0 - 1e-3 for p in report.points)


def test_select_best_prefers_lower_region_on_ties():
    problem = QuadraticProblem.symmetric(3)
    a = _front_point(problem, 0.1 * problem.centers[0], [0.55, 0.45])
    b = _front_point(problem, 0.1 * problem.centers[0], [0.55, 0.45])
    worse = _front_point(problem, -0.1 * problem.centers[0], [0.45, 0.55])
    sets = [ParetoSet(points=(b,), region_index=3), ParetoSet(points=(worse, a), region_index=1)]
    assert select_best(sets) is a
    with pytest.raises(NoSolutionError):
        select_best([ParetoSet(region_index=0), ParetoSet(region_index=1)])


@pytest.fixture(scope="module")
def quadratic_run():
    problem = QuadraticProblem.symmetric(10)
    return problem, psst_run(problem, SolverConfig(k=5, region_budget=20, master_seed=42))


def test_front_accuracy(quadratic_run):
    problem, report = quadratic_run
    losses = np.array([p.losses for p in report.points])
    assert len(losses) <= 100
    assert residuals(losses, analytic_front(problem, 10_000)).mean() <= 1e-3
    assert all(p.stationarity <= 1e-6 for p in report.points)
    for p in report.points:
        assert np.linalg.norm(p.kkt_weights @ problem.gradients(p.theta)) <= 1e-6


def test_points_within_a_region_are_novelty_separated(quadratic_run):
    problem = QuadraticProblem.symmetric(6)
    config = SolverConfig(k=2, region_budget=10, master_seed=1, novelty_delta=0.05)
    separated = psst_run(problem, config)
    for report, delta in ((quadratic_run[1], 1e-3), (separated, 0.05)):
        for s in report.sets:
            assert pairwise_min_distance([p.losses for p in s.points]) >= delta


def test_region_coverage_and_exclusion(quadratic_run):
    _, report = quadratic_run
    pi0 = report.balance.pi0
    assert pi0 == pytest.approx(math.pi / 4, abs=0.05)
    assert [s.region_index for s in report.sets] == list(range(5))
    for region, s in zip(report.regions, report.sets):
        inside = [p for p in s if region.lo.angle - 1e-3 <= p.angle <= region.hi.angle + 1e-3]
        assert len(inside) >= 1
    assert all(p.angle >= pi0 - 1e-3 for p in report.points)


def test_best_main_loss_beats_the_balance_point(quadratic_run):
    _, report = quadratic_run
    assert report.best.main_loss <= report.balance.point.main_loss + 1e-6
    assert report.best.main_loss == min(p.main_loss for p in report.points)
    assert report.total_descent_iters >= sum(s.descent_iters for s in report.sets)


def test_twopeak_best_main_loss():
    problem = TwoPeakProblem(6)
    report = psst_run(problem, SolverConfig(k=3, region_budget=4, master_seed=1))
    assert report.best.main_loss <= report.balance.point.main_loss + 1e-6


@pytest.mark.parametrize("problem", [QuadraticProblem.symmetric(10), TwoPeakProblem(10)], ids=["quadratic", "twopeak"])
def test_region_residual_no_worse_than_unrestricted(problem):
    front = analytic_front(problem, 10_000)
    for seed in range(5):
        config = SolverConfig(k=5, region_budget=4, master_seed=seed)
        restricted = psst_run(problem, config)
        free = psst_run(problem, config.replace(restrict_regions=False))
        assert len(free.sets) == 1 and free.sets[0].region_index == -1
        assert len(free.points) <= 20
        mean_restricted = residuals([p.losses for p in restricted.points], front).mean()
        mean_free = residuals([p.losses for p in free.points], front).mean()
        assert mean_restricted <= mean_free + 1e-6


def test_same_seed_same_result_and_threads_do_not_matter():
    problem = QuadraticProblem.symmetric(6)
    config = SolverConfig(k=4, region_budget=5, master_seed=3)
    first = psst_run(problem, config)
    second = psst_run(problem, config)
    threaded = psst_run(problem, config.replace(threads=4))
    for other in (second, threaded):
        assert [len(s) for s in other.sets] == [len(s) for s in first.sets]
        for p, q in zip(first.points, other.points):
            assert p.theta.tobytes() == q.theta.tobytes()
            assert p.losses.tobytes() == q.losses.tobytes()
        assert other.total_descent_iters == first.total_descent_iters


def test_warm_start_seeds_regions_from_the_balance_point():
    problem = QuadraticProblem.symmetric(6)
    report = psst_run(problem, SolverConfig(k=3, region_budget=3, master_seed=0, warm_start=True))
    assert len(report.sets) == 3
    assert all(len(s) >= 1 for s in report.sets)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
