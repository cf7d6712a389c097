"""
Run configuration: pydantic models for the JSON config file, parsing with
located error messages, CLI overrides and the normalized dump.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import (BaseModel, ConfigDict, Field, ValidationError, ValidationInfo,
                      field_validator, model_validator)

from .dynamics import ProblemSpec
from .ensemble import ParamDistribution
from .errors import ConfigError, DistributionError
from .models import MODELS, build_problem
from .solver import SaaSchedule, SolverOptions

logger = logging.getLogger(__name__)

DEFAULT_GRID = 900
DEFAULT_VALIDATION_SAMPLES = 200


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DistributionConfig(_Strict):
    """One parameter law as written in the config file."""

    name: str
    law: Literal["uniform", "point"] = "uniform"
    lo: Optional[float] = None
    hi: Optional[float] = None
    value: Optional[float] = None

    def to_distribution(self) -> ParamDistribution:
        return ParamDistribution(name=self.name, law=self.law, lo=self.lo, hi=self.hi,
                                 value=self.value)


class ScheduleConfig(_Strict):
    """Ensemble sizes (k_min..k_max by step, or an explicit list) and whether draws are nested."""

    k_min: int = Field(default=2, ge=1)
    k_max: Optional[int] = Field(default=None, ge=1)
    step: int = Field(default=1, ge=1)
    sizes: Optional[List[int]] = None
    nested: bool = False

    @model_validator(mode="after")
    def check_sizes(self) -> "ScheduleConfig":
        if self.sizes is not None:
            if not self.sizes:
                raise ValueError("sizes must not be empty")
            if self.sizes[0] < 1 or any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
                raise ValueError("sizes must be positive and strictly increasing")
        elif self.k_max is None:
            raise ValueError("schedule needs 'k_max' or 'sizes'")
        elif self.k_max < self.k_min:
            raise ValueError(f"k_max ({self.k_max}) must be >= k_min ({self.k_min})")
        return self

    def resolved(self) -> Tuple[int, ...]:
        if self.sizes is not None:
            return tuple(self.sizes)
        return tuple(range(self.k_min, self.k_max + 1, self.step))


class TolerancesConfig(_Strict):
    tol_J: float = Field(default=0.0, ge=0.0)
    tol_u: float = Field(default=0.0, ge=0.0)


class SolverConfig(_Strict):
    """Inner-solver options; the grid size lives at the top level."""

    max_inner_iters: int = Field(default=SolverOptions.max_inner_iters, gt=0)
    eta0: Optional[float] = Field(default=None, gt=0.0)
    beta: float = Field(default=SolverOptions.beta, gt=0.0, lt=1.0)
    armijo: float = Field(default=SolverOptions.armijo, gt=0.0, lt=1.0)
    tol_inner: float = Field(default=SolverOptions.tol_inner, gt=0.0)
    eps_sing: float = Field(default=SolverOptions.eps_sing, gt=0.0)
    delta_den: float = Field(default=SolverOptions.delta_den, gt=0.0)
    max_backtracks: int = Field(default=SolverOptions.max_backtracks, gt=0)
    min_arc_nodes: int = Field(default=SolverOptions.min_arc_nodes, gt=0)
    gradient: Literal["discrete", "continuous"] = SolverOptions.gradient
    step_rule: Literal["bb", "expand"] = SolverOptions.step_rule
    bang_steps: int = Field(default=SolverOptions.bang_steps, ge=0)


class RunConfig(_Strict):
    """Everything a solve run needs."""

    model: str = "sit"
    params: Dict[str, float] = Field(default_factory=dict)
    distributions: Optional[List[DistributionConfig]] = None
    grid: int = Field(default=DEFAULT_GRID, gt=0)
    u_min: Optional[float] = None
    u_max: Optional[float] = None
    schedule: ScheduleConfig
    seed: int = Field(default=0, ge=0)
    tolerances: TolerancesConfig = Field(default_factory=TolerancesConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    validation_samples: int = Field(default=DEFAULT_VALIDATION_SAMPLES, ge=0)
    out: str = "output"

    @field_validator("model")
    @classmethod
    def known_model(cls, value: str) -> str:
        if value not in MODELS:
            raise ValueError(f"unknown model '{value}' (available: {sorted(MODELS)})")
        return value

    @field_validator("u_max")
    @classmethod
    def bounds_ordered(cls, value: Optional[float], info: ValidationInfo) -> Optional[float]:
        u_min = info.data.get("u_min")
        if value is not None and u_min is not None and not value > u_min:
            raise ValueError(f"u_max ({value}) must exceed u_min ({u_min})")
        return value

    def problem(self) -> ProblemSpec:
        """Construct the ProblemSpec: model defaults, then params, then the bounds."""
        overrides = dict(self.params)
        if self.u_min is not None:
            overrides["u_min"] = self.u_min
        if self.u_max is not None:
            overrides["u_max"] = self.u_max
        laws = None
        if self.distributions is not None:
            try:
                laws = [d.to_distribution() for d in self.distributions]
            except DistributionError as exc:
                raise ConfigError(str(exc), field="distributions") from exc
        return build_problem(self.model, overrides, laws)

    def saa_schedule(self) -> SaaSchedule:
        return SaaSchedule(self.schedule.resolved(), base_seed=self.seed,
                           tol_J=self.tolerances.tol_J, tol_u=self.tolerances.tol_u,
                           nested=self.schedule.nested)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(grid=self.grid, **self.solver.model_dump())

    def normalize(self) -> Dict:
        """
        Config with every default filled in, including the model's control bounds.

        Returns:
            JSON-ready dict; parse_config of its dump gives the same dict back
        """
        spec = self.problem()
        filled = self.model_copy(update={"u_min": spec.u_min, "u_max": spec.u_max})
        return filled.model_dump(mode="json")

    def with_overrides(self, seed: Optional[int] = None, samples: Optional[int] = None,
                       grid: Optional[int] = None, out: Optional[str] = None) -> "RunConfig":
        """
        Apply command-line overrides and re-validate.

        ``samples`` sets the largest ensemble size of the schedule; explicit
        size lists keep their entries below it.
        """
        data = self.model_dump()
        if seed is not None:
            data["seed"] = seed
        if grid is not None:
            data["grid"] = grid
        if out is not None:
            data["out"] = out
        if samples is not None:
            sched = data["schedule"]
            if sched.get("sizes") is not None:
                sched["sizes"] = [k for k in sched["sizes"] if k < samples] + [samples]
            else:
                sched["k_max"] = samples
                sched["k_min"] = min(sched["k_min"], samples)
        return _validate(data)


def _location(error: Dict) -> str:
    return ".".join(str(part) for part in error["loc"]) or "<root>"


def _validate(data: Dict) -> RunConfig:
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(first["msg"], field=_location(first)) from exc
    config.problem()
    config.saa_schedule()
    return config


def config_from_dict(data: Dict) -> RunConfig:
    """Validate an already-decoded config mapping."""
    if not isinstance(data, dict):
        raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
    return _validate(data)


def parse_config(path: Union[str, Path]) -> RunConfig:
    """
    Read and validate a JSON run config.

    Args:
        path: Config file location

    Returns:
        RunConfig with defaults filled

    Raises:
        ConfigError: missing file, JSON syntax error (with line and column) or
            a validation error naming the offending field
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc.msg}", line=exc.lineno,
                          column=exc.colno) from exc
    config = config_from_dict(data)
    logger.debug("parsed config %s (model=%s)", path, config.model)
    return config


def dump_config(config: RunConfig) -> str:
    """Normalized config as sorted, indented JSON text."""
    return json.dumps(config.normalize(), sort_keys=True, indent=2)


def write_config(config: RunConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(dump_config(config) + "\n", encoding="utf-8")
    return path
