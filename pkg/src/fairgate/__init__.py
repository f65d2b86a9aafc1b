"""Penalized fair selection: exact static solver, thresholds and population dynamics."""
from .core import (
    PenaltySpec,
    PopulationState,
    QualificationGrid,
    SelectionPolicy,
    ValidationError,
    disparity,
    exponential,
    hinge,
    linear,
    parse_penalty,
    power,
    profit,
    quadratic,
    utility,
    validate_population,
)
from .solver import (
    StaticSolution,
    beta_e,
    beta_s,
    check_policy_structure,
    is_effective,
    is_fully_satisfactory,
    min_lambda_effective,
    min_lambda_satisfactory,
    normalize_orientation,
    oracle_solve,
    solve_dp_constrained,
    solve_penalized,
    utility_max,
)
from .dynamics import DynamicsKernel, simulate, step, stationary_candidates, tv_distance

__version__ = "0.1.0"
