"""Penalty-based stochastic solvers for minimax problems with coupled constraints."""

from spaco.benchmarks import (
    BasinClass,
    basin_errors,
    classify_basin,
    make_linear,
    make_nonlinear,
    make_toy2d,
)
from spaco.diagnostics import (
    DiagConfig,
    TraceRow,
    error_metrics,
    gen_grad_residual,
    kkt_residual,
    merit_value,
    multiplier_estimate,
    stationarity_gap_estimate,
)
from spaco.penalty import (
    InnerSolveReport,
    PenaltyParams,
    inner_max_solve,
    phi_grad,
    psi_grad,
    psi_value,
    sample_psi_grad,
)
from spaco.problem import (
    AnalyticReference,
    BoxSet,
    ConstrainedMinimaxProblem,
    ConstraintKind,
    OracleReport,
    StationaryPoint,
    check_oracle_consistency,
    project,
)
from spaco.schedules import IterParams, Schedule, ValidationResult, params_at, validate
from spaco.solvers import (
    RunTrace,
    SolverState,
    StopCriteria,
    StopReason,
    gda_fp_run,
    minminmax_run,
    spaco_run,
    spaco_step,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticReference",
    "BasinClass",
    "BoxSet",
    "ConstrainedMinimaxProblem",
    "ConstraintKind",
    "DiagConfig",
    "InnerSolveReport",
    "IterParams",
    "OracleReport",
    "PenaltyParams",
    "RunTrace",
    "Schedule",
    "SolverState",
    "StationaryPoint",
    "StopCriteria",
    "StopReason",
    "TraceRow",
    "ValidationResult",
    "check_oracle_consistency",
    "basin_errors",
    "classify_basin",
    "error_metrics",
    "gda_fp_run",
    "gen_grad_residual",
    "inner_max_solve",
    "kkt_residual",
    "make_linear",
    "make_nonlinear",
    "make_toy2d",
    "merit_value",
    "minminmax_run",
    "multiplier_estimate",
    "params_at",
    "phi_grad",
    "project",
    "psi_grad",
    "psi_value",
    "sample_psi_grad",
    "spaco_run",
    "spaco_step",
    "stationarity_gap_estimate",
    "validate",
]
