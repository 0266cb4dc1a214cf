"""
Solver configuration.

- Defaults live on the frozen `SolverConfig` dataclass.
- `.env` / process environment may override any field as PSST_<FIELD> (e.g. PSST_THREADS=4).
- Explicit keyword overrides win over the environment.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional

from dotenv import load_dotenv

from psst.errors import ConfigError

ENV_PREFIX = "PSST_"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class SolverConfig:
    step_init: float = 1.0
    stationarity_tol: float = 1e-6
    max_iters: int = 5000
    active_eps: float = 1e-3
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    fw_tol: float = 1e-9
    fw_max_iters: int = 500
    krylov_tol: float = 1e-6
    krylov_max_iters: int = 50
    expand_step: float = 0.1
    novelty_delta: float = 1e-3
    region_budget: int = 20
    k: int = 5
    master_seed: int = 0
    warm_start: bool = False
    restrict_regions: bool = True
    threads: int = 1

    def __post_init__(self) -> None:
        for name in ("step_init", "stationarity_tol", "active_eps", "fw_tol", "krylov_tol",
                     "expand_step", "novelty_delta"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value > 0 and value != float("inf")):
                raise ConfigError(f"{name} must be a positive finite number, got {value!r}")
        for name in ("armijo_c", "backtrack_factor"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                raise ConfigError(f"{name} must lie in (0, 1), got {value!r}")
        for name in ("max_iters", "fw_max_iters", "krylov_max_iters", "region_budget", "k", "threads"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        if isinstance(self.master_seed, bool) or not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ConfigError(f"master_seed must be an unsigned integer, got {self.master_seed!r}")

    @classmethod
    def from_env(
        cls,
        env: Optional[Mapping[str, str]] = None,
        defaults: Optional[Mapping[str, Any]] = None,
        **overrides: Any,
    ) -> "SolverConfig":
        """Build a config from PSST_* variables, then apply explicit overrides.

        Precedence, lowest first: field defaults, `defaults`, environment, `overrides`.

        Args:
            env: Mapping to read instead of os.environ (after load_dotenv).
            defaults: Per-problem field values, e.g. ProblemDefinition.solver_defaults().
            overrides: Field values that take precedence over the environment.

        Returns:
            A validated SolverConfig.

        Raises:
            ConfigError: Unknown default field or an invalid value.
        """
        if env is None:
            try:
                load_dotenv()
            except Exception:
                pass
            env = os.environ
        known = {f.name for f in dataclasses.fields(cls)}
        values: Dict[str, Any] = {}
        for name, value in (defaults or {}).items():
            if name not in known:
                raise ConfigError(f"Unknown config field in defaults: {name}")
            values[name] = value
        for f in dataclasses.fields(cls):
            raw = env.get(ENV_PREFIX + f.name.upper())
            if raw is None or raw.strip() == "":
                continue
            values[f.name] = _coerce(f.name, raw.strip(), f.default)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def replace(self, **changes: Any) -> "SolverConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SolverConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown config fields: {', '.join(sorted(unknown))}")
        return cls(**dict(data))


def _coerce(name: str, raw: str, default: Any) -> Any:
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"Invalid value for {ENV_PREFIX}{name.upper()}: {raw!r}") from None


DEFAULT_CONFIG = SolverConfig()
