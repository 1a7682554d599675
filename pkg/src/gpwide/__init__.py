"""Weighted space-time (elliptic regularization) solver for k-species competition systems.

The public surface re-exports the operations of each module; see the README
for a tour.
"""
from .config import RunOptions, load_config
from .diagnostics import (BoundConstants, SegregationTrace, bound_constants, holder_quotient,
                          lemma_sq_integral, segregation_trace)
from .errors import (AdmissibilityError, ConfigError, ExprError, ExprEvalError, ExprSyntaxError,
                     GPWideError, NumericsError, UndeclaredVariableError)
from .expr import CoefficientExpr, eval_coefficient, parse_coefficient_expr
from .functional import EnergyReport, el_residual, energy_traces, evaluate_F_eps, gradient_F_eps
from .grid import (Grid, discrete_gradient_sq, discrete_time_derivative_sq, make_grid, truncation_horizon,
                   weighted_spacetime_quadrature)
from .io import read_trajectory_csv, write_report, write_trajectory_csv
from .minimizer import (MinimizeOptions, MinimizeResult, continuation_in_eps, default_grid_builder, minimize,
                        project_admissible)
from .parabolic import Trajectory, compare_wide_vs_parabolic, imex_step, solve_parabolic
from .problem import (GrowthConstants, ProblemSpec, ValidationReport, antiderivative_F, build_problem,
                      epsilon_bar, regularize_diffusion, validate_problem)

__all__ = [
    "AdmissibilityError",
    "BoundConstants",
    "CoefficientExpr",
    "ConfigError",
    "EnergyReport",
    "ExprError",
    "ExprEvalError",
    "ExprSyntaxError",
    "GPWideError",
    "Grid",
    "GrowthConstants",
    "MinimizeOptions",
    "MinimizeResult",
    "NumericsError",
    "ProblemSpec",
    "RunOptions",
    "SegregationTrace",
    "Trajectory",
    "UndeclaredVariableError",
    "ValidationReport",
    "antiderivative_F",
    "bound_constants",
    "build_problem",
    "compare_wide_vs_parabolic",
    "continuation_in_eps",
    "default_grid_builder",
    "discrete_gradient_sq",
    "discrete_time_derivative_sq",
    "el_residual",
    "energy_traces",
    "epsilon_bar",
    "eval_coefficient",
    "evaluate_F_eps",
    "gradient_F_eps",
    "holder_quotient",
    "imex_step",
    "lemma_sq_integral",
    "load_config",
    "make_grid",
    "minimize",
    "parse_coefficient_expr",
    "project_admissible",
    "read_trajectory_csv",
    "regularize_diffusion",
    "segregation_trace",
    "solve_parabolic",
    "truncation_horizon",
    "validate_problem",
    "weighted_spacetime_quadrature",
    "write_report",
    "write_trajectory_csv",
]

__version__ = "0.1.0"
