"""
Workflow runner for Pareto self-supervised training experiments.

Commands:
1) run       balance point -> preference regions -> region exploration -> front.csv/manifest.json/best.json
2) sweep     weighted-sum baseline over a simplex grid, same output schema (region_index = -1)
3) gradcheck analytic vs finite-difference gradients at random points
4) report    residual-to-front, best main loss and iteration totals (optionally vs a baseline run)
5) balance   balance angle over many random starts

Exit codes: 0 ok, 1 usage/config/IO error, 2 every region failed, 3 gradient check failed.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd

from psst.balance import balance_summary, multi_start_balance
from psst.bench import (
    front_frame,
    manifest_for_report,
    manifest_for_run,
    manifest_for_sweep,
    sets_to_groups,
    summarize_run,
    write_front_csv,
    write_run_outputs,
)
from psst.config import SolverConfig
from psst.errors import ConfigError, DimensionError, FrontNotAvailableError, PsstError, RunFailedError
from psst.exploration import psst_run
from psst.problems import (
    build_problem,
    gradient_check,
    gradient_threshold,
    scalarization_sweep,
    simplex_grid,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUN_FAILED = 2
EXIT_GRADCHECK = 3


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else os.getenv("PSST_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s')


def _add_problem_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", choices=["quadratic", "twopeak", "mlp"], required=True)
    p.add_argument("--dim", type=int, default=10, help="parameter dimension (quadratic, twopeak)")
    p.add_argument("--tasks", type=int, default=2, help="number of tasks, main task first")
    p.add_argument("--hidden", type=int, default=16, help="mlp hidden width")
    p.add_argument("--samples", type=int, default=256, help="mlp dataset size")
    p.add_argument("--data-seed", type=int, default=0, help="mlp dataset seed")
    p.add_argument("--init-scale", type=float, default=None,
                   help="spread of random starts around the problem's start center (quadratic, twopeak)")


def _problem_from_args(args: argparse.Namespace):
    return build_problem(args.problem, dim=args.dim, tasks=args.tasks, hidden=args.hidden,
                         samples=args.samples, data_seed=args.data_seed, init_scale=args.init_scale)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psst", description="Pareto self-supervised training experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="preference-region Pareto exploration")
    _add_problem_args(run)
    run.add_argument("--k", type=int, default=5, help="number of preference regions")
    run.add_argument("--budget", type=int, default=20, help="points per region")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True)
    run.add_argument("--no-region", action="store_true", help="unrestricted exploration from the balance point")
    run.add_argument("--warm-start", action="store_true", help="seed every region from the balance point")
    run.add_argument("--threads", type=int, default=None, help="region parallelism (default PSST_THREADS or 1)")

    sweep = sub.add_parser("sweep", help="weighted-sum baseline")
    _add_problem_args(sweep)
    sweep.add_argument("--grid", type=int, default=11, help="number of weight vectors")
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--out", required=True)

    grad = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    _add_problem_args(grad)
    grad.add_argument("--trials", type=int, default=50)
    grad.add_argument("--seed", type=int, default=0)

    report = sub.add_parser("report", help="residual and iteration report for a run directory")
    report.add_argument("--run", required=True)
    report.add_argument("--baseline", default=None)

    balance = sub.add_parser("balance", help="balance angle over several random starts")
    _add_problem_args(balance)
    balance.add_argument("--seeds", type=int, default=20, help="number of random starts")
    balance.add_argument("--seed", type=int, default=0, help="first seed")
    balance.add_argument("--target", type=float, default=math.pi / 4)
    balance.add_argument("--tolerance", type=float, default=0.05)
    balance.add_argument("--out", default=None, help="optional directory for balance.csv")
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    problem = _problem_from_args(args)
    config = SolverConfig.from_env(
        defaults=problem.solver_defaults(),
        k=args.k,
        region_budget=args.budget,
        master_seed=args.seed,
        restrict_regions=False if args.no_region else None,
        warm_start=True if args.warm_start else None,
        threads=args.threads,
    )
    run_id = f"{problem.name}-{'psst' if config.restrict_regions else 'unrestricted'}-s{config.master_seed}"

    print(f"Step 1: Exploring {problem.name} (dim={problem.dim}, tasks={problem.tasks}, K={config.k})...")
    step1_start = time.time()
    try:
        report = psst_run(problem, config)
    except RunFailedError as exc:
        print(f"Run failed: {exc}")
        if exc.sets:
            pi0 = exc.balance.pi0 if exc.balance is not None else None
            iters = sum(s.descent_iters for s in exc.sets)
            manifest = manifest_for_run(exc.sets, [], pi0, iters, 0, problem.describe(), config)
            frame = front_frame(run_id, sets_to_groups(exc.sets), problem.tasks)
            write_run_outputs(args.out, frame, manifest, None, time.time() - step1_start, config.threads)
        return EXIT_RUN_FAILED
    step1_time = time.time() - step1_start
    found = sum(len(s) for s in report.sets)
    print(f"Balance angle pi0={report.balance.pi0:.6f}; found {found} points. (took {step1_time:.2f}s)")
    for s in report.sets:
        status = f"error: {s.error}" if s.failed else f"{len(s)} points"
        print(f"  region {s.region_index}: {status}, {s.descent_iters} descent iterations")

    print("Step 2: Writing results...")
    step2_start = time.time()
    frame = front_frame(run_id, sets_to_groups(report.sets), problem.tasks)
    manifest = manifest_for_report(report, problem.describe(), config)
    out = write_run_outputs(args.out, frame, manifest, report.best, report.wall_time, config.threads)
    step2_time = time.time() - step2_start
    print(f"Best main-task loss {report.best.main_loss:.6g} in region {report.best.region_index}.")
    print(f"Wrote {len(frame)} rows to: {out} (took {step2_time:.2f}s)")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    problem = _problem_from_args(args)
    config = SolverConfig.from_env(defaults=problem.solver_defaults(), master_seed=args.seed)
    grid = simplex_grid(args.grid, problem.tasks)

    print(f"Step 1: Weighted-sum sweep over {len(grid)} weight vectors...")
    step1_start = time.time()
    sweep = scalarization_sweep(problem, grid, config)
    step1_time = time.time() - step1_start
    print(f"Converged {len(sweep.points)}/{len(grid)} weights, {sweep.total_iters} iterations. (took {step1_time:.2f}s)")

    run_id = f"{problem.name}-sweep-s{config.master_seed}"
    frame = front_frame(run_id, [(-1, sweep.points)], problem.tasks)
    manifest = manifest_for_sweep(sweep, problem.describe(), config)
    best = min(sweep.points, key=lambda p: p.main_loss) if sweep.points else None
    out = write_run_outputs(args.out, frame, manifest, best, step1_time, config.threads)
    print(f"Wrote {len(frame)} rows to: {out}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    problem = _problem_from_args(args)
    threshold = gradient_threshold(problem)
    print(f"Checking {problem.name} gradients at {args.trials} random points...")
    start = time.time()
    worst = gradient_check(problem, args.trials, args.seed)
    print(f"Max relative error {worst:.3e} (threshold {threshold:.0e}). (took {time.time() - start:.2f}s)")
    if worst > threshold:
        print("FAIL: gradient check exceeded threshold")
        return EXIT_GRADCHECK
    print("OK")
    return EXIT_OK


_REPORT_ROWS = ["mode", "points", "mean_residual", "max_residual", "best_main_loss", "total_iters",
                "tangent_solves", "white_space_points"]


def cmd_report(args: argparse.Namespace) -> int:
    try:
        summary = summarize_run(args.run)
        baseline = summarize_run(args.baseline) if args.baseline else None
    except FrontNotAvailableError as exc:
        print(f"No analytic front: {exc}")
        return EXIT_USAGE

    print(f"Run: {args.run}")
    print(f"  points:          {summary['points']}")
    print(f"  mean residual:   {summary['mean_residual']:.6e}")
    print(f"  max residual:    {summary['max_residual']:.6e}")
    print(f"  best main loss:  {summary['best_main_loss']:.6g}")
    print(f"  total iters:     {summary['total_iters']} ({summary['tangent_solves']} tangent solves)")
    if "region_coverage" in summary:
        coverage = ", ".join(f"{k}:{v}" for k, v in summary["region_coverage"].items())
        print(f"  region coverage: {coverage} (white space: {summary['white_space_points']})")
    if baseline is not None:
        table = pd.DataFrame(
            {"run": [summary.get(k) for k in _REPORT_ROWS], "baseline": [baseline.get(k) for k in _REPORT_ROWS]},
            index=_REPORT_ROWS,
        )
        print(table.to_string())
    return EXIT_OK


def cmd_balance(args: argparse.Namespace) -> int:
    problem = _problem_from_args(args)
    config = SolverConfig.from_env(defaults=problem.solver_defaults())
    seeds = list(range(args.seed, args.seed + args.seeds))
    print(f"Finding balance points for {len(seeds)} seeds...")
    start = time.time()
    results = multi_start_balance(problem, seeds, config)
    summary = balance_summary(results, args.target, args.tolerance)
    print(f"pi0 mean {summary['mean_pi0']:.6f} std {summary['std_pi0']:.3e}; "
          f"{summary['within']}/{summary['runs']} within {args.tolerance} of {args.target:.6f}. "
          f"(took {time.time() - start:.2f}s)")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame({
            "seed": seeds,
            "pi0": [r.pi0 for r in results],
            "L1": [float(r.point.losses[0]) for r in results],
            "iters_used": [r.point.iters_used for r in results],
        })
        write_front_csv(frame, out / "balance.csv")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
    "balance": cmd_balance,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DimensionError) as exc:
        print(f"Invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PsstError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
