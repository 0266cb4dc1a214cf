"""
psst: Pareto self-supervised training toolkit.

- Loads .env from the working directory on import so PSST_* settings apply everywhere.
- Re-exports the main entry points.
"""
from __future__ import annotations

from dotenv import load_dotenv

try:
    load_dotenv()
except Exception:
    # Non-fatal if .env is missing or unreadable
    pass

from psst.balance import BalanceResult, find_balance_point, multi_start_balance  # noqa: E402
from psst.bench import TOOL_VERSION as __version__  # noqa: E402
from psst.config import SolverConfig  # noqa: E402
from psst.descent import (  # noqa: E402
    constrained_direction,
    descend_to_pareto,
    line_search,
    mgda_direction,
    min_norm_in_hull,
    stationarity_measure,
)
from psst.exploration import (  # noqa: E402
    ExplorationReport,
    choose_betas,
    expand_point,
    explore_region,
    hessian_vector,
    psst_run,
    select_best,
    tangent_direction,
)
from psst.moo_core import ParetoPoint, ParetoSet, ProblemDefinition, dominates, objective_angle, rho  # noqa: E402
from psst.preference import (  # noqa: E402
    activated_sets,
    constraint_gradients,
    constraint_values,
    make_preference_vectors,
)
from psst.problems import (  # noqa: E402
    QuadraticProblem,
    ToyMlpProblem,
    TwoPeakProblem,
    analytic_front,
    build_problem,
    finite_diff_gradient,
    scalarization_sweep,
)
