"""
Run artifacts: manifests, front CSVs, best-point JSON and residual reports.

Files written per run directory:
- front.csv      one row per Pareto point (pandas, floats as %.17g)
- manifest.json  config snapshot, problem sizes, seeds and counters (deterministic bytes)
- best.json      the selected point
- timing.json    wall-clock durations, kept apart so the manifest stays reproducible
"""
from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray

from psst.config import SolverConfig
from psst.exploration import ExplorationReport
from psst.moo_core import ParetoPoint, ParetoSet
from psst.preference import Subregion, locate_region, make_subregions
from psst.problems import SweepReport, analytic_front, build_problem

logger = logging.getLogger(__name__)

TOOL_VERSION = "0.1.0"
FRONT_SAMPLES = 10_000
FLOAT_FORMAT = "%.17g"

FRONT_FILE = "front.csv"
MANIFEST_FILE = "manifest.json"
BEST_FILE = "best.json"
TIMING_FILE = "timing.json"
# Execution settings that never change results; recorded in timing.json, not the manifest.
EXECUTION_FIELDS = ("threads",)


@dataclass(frozen=True)
class RegionCounters:
    region_index: int
    descent_iters: int
    tangent_solves: int
    points_found: int
    lo: Optional[float] = None
    hi: Optional[float] = None
    error: Optional[str] = None


@dataclass(frozen=True)
class RunManifest:
    tool_version: str
    command: str
    mode: str
    problem: Dict[str, Any]
    master_seed: int
    config: Dict[str, Any]
    regions: List[RegionCounters] = field(default_factory=list)
    total_iters: int = 0
    total_tangent_solves: int = 0
    points_found: int = 0
    pi0: Optional[float] = None
    failures: List[List[Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunManifest":
        values = dict(data)
        values["regions"] = [RegionCounters(**r) for r in values.get("regions", [])]
        values["failures"] = [list(f) for f in values.get("failures", [])]
        return cls(**values)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls.from_dict(json.loads(text))


def config_snapshot(config: SolverConfig) -> Dict[str, Any]:
    return {k: v for k, v in config.to_dict().items() if k not in EXECUTION_FIELDS}


def manifest_for_run(
    sets: Sequence[ParetoSet],
    regions: Sequence[Subregion],
    pi0: Optional[float],
    total_iters: int,
    total_tangent_solves: int,
    problem_info: Dict[str, Any],
    config: SolverConfig,
) -> RunManifest:
    bounds = {r.index: (r.lo.angle, r.hi.angle) for r in regions}
    counters = [
        RegionCounters(
            region_index=s.region_index,
            descent_iters=s.descent_iters,
            tangent_solves=s.tangent_solves,
            points_found=len(s),
            lo=bounds.get(s.region_index, (None, None))[0],
            hi=bounds.get(s.region_index, (None, None))[1],
            error=s.error,
        )
        for s in sets
    ]
    return RunManifest(
        tool_version=TOOL_VERSION,
        command="run",
        mode="psst" if config.restrict_regions else "unrestricted",
        problem=dict(problem_info),
        master_seed=config.master_seed,
        config=config_snapshot(config),
        regions=counters,
        total_iters=total_iters,
        total_tangent_solves=total_tangent_solves,
        points_found=sum(len(s) for s in sets),
        pi0=pi0,
    )


def manifest_for_report(report: ExplorationReport, problem_info: Dict[str, Any], config: SolverConfig) -> RunManifest:
    return manifest_for_run(report.sets, report.regions, report.balance.pi0, report.total_descent_iters,
                            report.total_tangent_solves, problem_info, config)


def manifest_for_sweep(sweep: SweepReport, problem_info: Dict[str, Any], config: SolverConfig) -> RunManifest:
    return RunManifest(
        tool_version=TOOL_VERSION,
        command="sweep",
        mode="sweep",
        problem=dict(problem_info),
        master_seed=config.master_seed,
        config=config_snapshot(config),
        total_iters=sweep.total_iters,
        points_found=len(sweep.points),
        failures=[[index, message] for index, message in sweep.failures],
    )


def front_columns(tasks: int) -> List[str]:
    return ["run_id", "region_index", "point_index"] + [f"L{m + 1}" for m in range(tasks)] + [
        "angle", "stationarity", "iters_used"]


def front_frame(run_id: str, groups: Iterable[Tuple[int, Sequence[ParetoPoint]]], tasks: int) -> pd.DataFrame:
    """Rows of (region, point) records; groups are (region_index, points) pairs."""
    rows = []
    for region_index, points in groups:
        for point_index, p in enumerate(points):
            rows.append([run_id, int(region_index), point_index] + [float(v) for v in p.losses]
                        + [float(p.angle), float(p.stationarity), int(p.iters_used)])
    return pd.DataFrame(rows, columns=front_columns(tasks))


def sets_to_groups(sets: Sequence[ParetoSet]) -> List[Tuple[int, Sequence[ParetoPoint]]]:
    return [(s.region_index, s.points) for s in sorted(sets, key=lambda s: s.region_index)]


def write_front_csv(frame: pd.DataFrame, path: os.PathLike) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_front_csv(path: os.PathLike) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def loss_columns(frame: pd.DataFrame) -> List[str]:
    return [c for c in frame.columns if c.startswith("L") and c[1:].isdigit()]


def point_to_dict(point: ParetoPoint) -> Dict[str, Any]:
    return {
        "region_index": point.region_index,
        "main_loss": float(point.losses[0]),
        "losses": point.losses.tolist(),
        "angle": float(point.angle),
        "stationarity": float(point.stationarity),
        "kkt_weights": point.kkt_weights.tolist(),
        "iters_used": int(point.iters_used),
        "theta": point.theta.tolist(),
    }


def write_json(path: os.PathLike, data: Any) -> None:
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def write_run_outputs(out_dir: os.PathLike, frame: pd.DataFrame, manifest: RunManifest,
                      best: Optional[ParetoPoint], wall_time: float, threads: int = 1) -> Path:
    """Write front.csv, manifest.json, best.json (when there is a best point) and timing.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_front_csv(frame, out / FRONT_FILE)
    (out / MANIFEST_FILE).write_text(manifest.to_json(), encoding="utf-8")
    if best is not None:
        write_json(out / BEST_FILE, point_to_dict(best))
    write_json(out / TIMING_FILE, {"wall_time_s": wall_time, "threads": threads})
    return out


def load_manifest(run_dir: os.PathLike) -> RunManifest:
    return RunManifest.from_json((Path(run_dir) / MANIFEST_FILE).read_text(encoding="utf-8"))


def residuals(points: ArrayLike, front: ArrayLike) -> NDArray[np.float64]:
    """Distance from each objective vector to the polyline through the front samples."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    front = np.atleast_2d(np.asarray(front, dtype=np.float64))
    if points.size == 0:
        return np.zeros(0)
    if front.shape[0] == 1:
        return np.linalg.norm(points - front[0], axis=1)
    start = front[:-1]
    span = front[1:] - front[:-1]
    length2 = (span * span).sum(axis=1)
    out = np.empty(points.shape[0])
    for i, x in enumerate(points):
        proj = ((x - start) * span).sum(axis=1)
        t = np.divide(proj, length2, out=np.zeros_like(proj), where=length2 > 0)
        nearest = start + np.clip(t, 0.0, 1.0)[:, None] * span
        out[i] = float(np.sqrt(((nearest - x) ** 2).sum(axis=1)).min())
    return out


def summarize_run(run_dir: os.PathLike, samples: int = FRONT_SAMPLES) -> Dict[str, Any]:
    """Residual, best-loss and iteration summary of one run directory.

    Args:
        run_dir: Directory holding front.csv and manifest.json.
        samples: Analytic front resolution used for residuals.

    Returns:
        Dict of point count, mean/max residual, best main loss and iteration counters, plus
        pi0, white_space_points and region_coverage when the run has a balance angle.

    Raises:
        FrontNotAvailableError: The run's problem has no analytic front.
    """
    manifest = load_manifest(run_dir)
    frame = read_front_csv(Path(run_dir) / FRONT_FILE)
    problem = build_problem(**manifest.problem)
    front = analytic_front(problem, samples)
    losses = frame[loss_columns(frame)].to_numpy(dtype=np.float64)
    dist = residuals(losses, front)
    summary: Dict[str, Any] = {
        "mode": manifest.mode,
        "points": int(len(frame)),
        "mean_residual": float(dist.mean()) if dist.size else float("nan"),
        "max_residual": float(dist.max()) if dist.size else float("nan"),
        "best_main_loss": float(losses[:, 0].min()) if dist.size else float("nan"),
        "total_iters": manifest.total_iters,
        "tangent_solves": manifest.total_tangent_solves,
    }
    if manifest.pi0 is not None:
        eps = float(manifest.config.get("active_eps", 1e-3))
        angles = frame["angle"].to_numpy(dtype=np.float64)
        summary["pi0"] = manifest.pi0
        summary["white_space_points"] = int(np.sum(angles < manifest.pi0 - eps))
        if manifest.mode == "psst":
            regions = make_subregions(manifest.pi0, int(manifest.config["k"]))
            located = [locate_region(row, regions, tol=eps) for row in losses]
            summary["region_coverage"] = {r.index: located.count(r.index) for r in regions}
    return summary
