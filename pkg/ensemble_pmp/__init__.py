"""
Ensemble PMP Package

Sample-average ensemble optimal control of control-affine systems with a
projected-gradient inner solver, Pontryagin switching-function analysis,
arc classification and the first-order singular feedback law.
"""

__version__ = "1.0.0"
__description__ = "Ensemble optimal control for control-affine systems"

# Core functionality imports
from .config import RunConfig, parse_config
from .ensemble import Ensemble, ParamDistribution, ParamSample, derive_seed, expectation, sample_ensemble
from .integrate import ControlGrid, TimeGrid, integrate_adjoint, integrate_forward
from .models import build_problem
from .pmp import classify_arcs, singular_feedback, switching_function
from .solver import SaaSchedule, SolverOptions, cost_evaluate, saa_solve, solve_fixed_ensemble

__all__ = [
    "RunConfig",
    "parse_config",
    "Ensemble",
    "ParamDistribution",
    "ParamSample",
    "derive_seed",
    "expectation",
    "sample_ensemble",
    "ControlGrid",
    "TimeGrid",
    "integrate_adjoint",
    "integrate_forward",
    "build_problem",
    "classify_arcs",
    "singular_feedback",
    "switching_function",
    "SaaSchedule",
    "SolverOptions",
    "cost_evaluate",
    "saa_solve",
    "solve_fixed_ensemble",
]
