import json
import math
import os
import sys

PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from psst.bench import (  # noqa: E402
    FRONT_FILE,
    MANIFEST_FILE,
    TIMING_FILE,
    RegionCounters,
    RunManifest,
    front_columns,
    front_frame,
    load_manifest,
    manifest_for_report,
    point_to_dict,
    read_front_csv,
    residuals,
    sets_to_groups,
    summarize_run,
    write_front_csv,
    write_run_outputs,
)
from psst.config import SolverConfig  # noqa: E402
from psst.errors import FrontNotAvailableError  # noqa: E402
from psst.exploration import psst_run  # noqa: E402
from psst.moo_core import ParetoPoint, ParetoSet, objective_angle  # noqa: E402
from psst.problems import QuadraticProblem, ToyMlpProblem, analytic_front  # noqa: E402


def _point(losses, region_index=0):
    losses = np.asarray(losses, dtype=np.float64)
    return ParetoPoint(theta=np.array([0.1, 1.0 / 3.0]), losses=losses, kkt_weights=np.array([0.25, 0.75]),
                       stationarity=1e-7, angle=objective_angle(losses), region_index=region_index, iters_used=4)


def test_manifest_round_trip():
    manifest = RunManifest(
        tool_version="0.1.0",
        command="run",
        mode="psst",
        problem={"name": "quadratic", "dim": 10, "tasks": 2},
        master_seed=42,
        config=SolverConfig(master_seed=42).to_dict(),
        regions=[RegionCounters(0, 120, 8, 5, lo=math.pi / 4, hi=0.1 + 1.0 / 3.0),
                 RegionCounters(1, 0, 0, 0, error="region 1 not reached")],
        total_iters=163,
        total_tangent_solves=8,
        points_found=5,
        pi0=math.pi / 4,
        failures=[[3, "stall"]],
    )
    text = manifest.to_json()
    assert RunManifest.from_json(text) == manifest
    assert RunManifest.from_json(text).to_json() == text
    assert json.loads(text)["config"]["stationarity_tol"] == 1e-6


def test_front_csv_schema_and_lossless_floats(tmp_path):
    points = [_point([1.0 / 3.0, 2.0 / 3.0]), _point([0.1, 0.7])]
    frame = front_frame("quadratic-psst-s0", [(1, points), (-1, [])], tasks=2)
    path = tmp_path / FRONT_FILE
    write_front_csv(frame, path)
    header = path.read_text().splitlines()[0]
    assert header == "run_id,region_index,point_index,L1,L2,angle,stationarity,iters_used"
    assert front_columns(3)[3:6] == ["L1", "L2", "L3"]
    back = read_front_csv(path)
    assert back["L1"].tolist() == [1.0 / 3.0, 0.1]
    assert back["angle"].tolist() == [p.angle for p in points]
    assert back["point_index"].tolist() == [0, 1]
    assert b"\r\n" not in path.read_bytes()


def test_sets_to_groups_sorts_by_region():
    sets = [ParetoSet(points=(_point([1.0, 2.0], 2),), region_index=2), ParetoSet(region_index=0)]
    assert [index for index, _ in sets_to_groups(sets)] == [0, 2]


def test_residual_fixtures():
    front = np.stack([np.linspace(0.0, 1.0, 11), 1.0 - np.linspace(0.0, 1.0, 11)], axis=1)
    assert np.allclose(residuals(front, front), 0.0, atol=1e-15)
    offset = np.array([[0.5, 0.5]]) + 0.1 * np.array([1.0, 1.0]) / math.sqrt(2.0)
    dist = residuals(offset, front)
    assert dist.mean() == pytest.approx(0.1, abs=1e-12)
    assert dist.max() == pytest.approx(0.1, abs=1e-12)
    assert residuals(np.zeros((0, 2)), front).size == 0


def test_point_to_dict_is_json_ready():
    data = point_to_dict(_point([0.5, 0.25], 3))
    assert data["region_index"] == 3
    assert data["main_loss"] == 0.5
    assert data["kkt_weights"] == [0.25, 0.75]
    assert json.loads(json.dumps(data)) == data


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    problem = QuadraticProblem.symmetric(6)
    config = SolverConfig(k=3, region_budget=4, master_seed=5)
    report = psst_run(problem, config)
    frame = front_frame("quadratic-psst-s5", sets_to_groups(report.sets), problem.tasks)
    manifest = manifest_for_report(report, problem.describe(), config)
    out = tmp_path_factory.mktemp("run")
    write_run_outputs(out, frame, manifest, report.best, report.wall_time, threads=config.threads)
    return out, report, problem


def test_run_outputs_and_manifest_counters(run_dir):
    out, report, _ = run_dir
    manifest = load_manifest(out)
    assert manifest.mode == "psst"
    assert manifest.points_found == len(report.points)
    assert [r.region_index for r in manifest.regions] == [0, 1, 2]
    assert manifest.regions[0].lo == report.balance.pi0
    assert manifest.total_iters == report.total_descent_iters
    timing = json.loads((out / TIMING_FILE).read_text())
    assert "wall_time_s" in timing and timing["threads"] == 1
    assert "threads" not in manifest.config
    assert manifest.config["k"] == 3
    assert "wall_time" not in (out / MANIFEST_FILE).read_text()


def test_summarize_run(run_dir):
    out, report, problem = run_dir
    summary = summarize_run(out)
    assert summary["points"] == len(report.points)
    assert summary["mean_residual"] <= 1e-3
    assert summary["best_main_loss"] == pytest.approx(report.best.main_loss)
    assert summary["white_space_points"] == 0
    assert sum(summary["region_coverage"].values()) == len(report.points)
    front = analytic_front(problem, 10_000)
    assert summary["max_residual"] == pytest.approx(residuals([p.losses for p in report.points], front).max())


def test_summarize_run_without_front(tmp_path):
    problem = ToyMlpProblem(input_dim=2, hidden=3, samples=8)
    manifest = RunManifest(tool_version="0.1.0", command="sweep", mode="sweep", problem=problem.describe(),
                           master_seed=0, config=SolverConfig().to_dict())
    write_run_outputs(tmp_path, front_frame("mlp-sweep-s0", [], problem.tasks), manifest, None, 0.0)
    with pytest.raises(FrontNotAvailableError):
        summarize_run(tmp_path)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
