"""Convergence measures recorded along solver runs."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Iterable, Optional, Sequence

import numpy as np

from spaco.penalty import PenaltyParams, inner_max_solve, psi_grad, psi_value, sample_psi_grad
from spaco.problem import Array, BoxSet, ConstrainedMinimaxProblem

if TYPE_CHECKING:
    from spaco.schedules import IterParams
    from spaco.solvers import SolverState

TRACE_COLUMNS = (
    "k",
    "eps_x",
    "eps_y",
    "gen_grad_residual",
    "constraint_violation",
    "kkt_residual",
    "merit_value",
    "gap_estimate",
    "lambda_norm",
)


@dataclass
class TraceRow:
    k: int
    eps_x: Optional[float]
    eps_y: Optional[float]
    gen_grad_residual: float
    constraint_violation: float
    kkt_residual: Optional[float] = None
    merit_value: Optional[float] = None
    gap_estimate: Optional[float] = None
    lambda_norm: Optional[float] = None

    @property
    def max_eps(self) -> Optional[float]:
        if self.eps_x is None or self.eps_y is None:
            return None
        return max(self.eps_x, self.eps_y)

    def csv_fields(self) -> list[str]:
        return [format_number(getattr(self, name)) for name in TRACE_COLUMNS]


@dataclass(frozen=True)
class DiagConfig:
    """What to compute for each recorded trace row.

    ``stride`` rows are written every ``stride`` iterations (and always for
    the last one). Merit rows need an inner solve per row, so they run at the
    looser ``inner_tol``.
    """

    stride: int = 1
    inner_tol: float = 1e-4
    kkt: bool = True
    merit: bool = False
    gap: bool = False
    gap_samples: int = 1000
    phi_lower: Optional[float] = None

    def __post_init__(self) -> None:
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.gap_samples < 1:
            raise ValueError(f"gap_samples must be >= 1, got {self.gap_samples}")


MeritConfig = DiagConfig


def format_number(value: Any) -> str:
    """Shortest round-trip text for a trace value; ``None`` becomes empty."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_trace_csv(rows: Iterable[TraceRow], stream: io.TextIOBase) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_fields())


def read_trace_csv(stream: io.TextIOBase) -> list[TraceRow]:
    reader = csv.reader(stream)
    header = next(reader)
    if tuple(header) != TRACE_COLUMNS:
        raise ValueError(f"unexpected trace header {header}")
    rows = []
    for rec in reader:
        vals: dict[str, Any] = {}
        for name, text in zip(TRACE_COLUMNS, rec):
            if name == "k":
                vals[name] = int(text)
            else:
                vals[name] = float(text) if text != "" else None
        rows.append(TraceRow(**vals))
    return rows


def gen_grad_residual(x: Array, g: Array, alpha: float, set_x: BoxSet) -> float:
    """Gradient mapping norm ``||x - P_X(x - alpha g)|| / alpha``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return float(np.linalg.norm(x - set_x.project(x - alpha * g))) / alpha


def lagrangian_grad(problem: ConstrainedMinimaxProblem, x: Array, y: Array,
                    lam: Array) -> tuple[Array, Array]:
    """Gradient of ``L = f - lam . c``."""
    gx, gy = problem.grad_f(x, y)
    jx, jy = problem.c_jacobians(x, y)
    return gx - jx.T @ lam, gy - jy.T @ lam


def kkt_residual(problem: ConstrainedMinimaxProblem, x: Array, y: Array, lam: Array) -> float:
    """Largest violation among x-stationarity, y-stationarity, feasibility and
    complementarity, with unit-step gradient mappings for the box parts."""
    lam = np.asarray(lam, dtype=float)
    ineq = ~problem.equality_mask
    if np.any(lam[ineq] < 0):
        raise ValueError("inequality multipliers must be nonnegative")
    lx, ly = lagrangian_grad(problem, x, y, lam)
    c = problem.c_value(x, y)
    return max(
        gen_grad_residual(x, lx, 1.0, problem.set_x),
        gen_grad_residual(y, -ly, 1.0, problem.set_y),
        float(np.linalg.norm(problem.violation_terms(c))),
        abs(float(lam @ c)),
    )


def multiplier_estimate(problem: ConstrainedMinimaxProblem, x: Array, y: Array, rho: float) -> Array:
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    return rho * problem.violation_terms(problem.c_value(x, y))


@dataclass(frozen=True)
class MeritTerms:
    """Unweighted pieces of the merit function at one iterate."""

    phi: float
    tracking: float
    grad_error: float
    displacement: float
    a: float
    b: float
    c: float
    d: float

    def value(self, phi_lower: float) -> float:
        return (self.a * (self.phi - phi_lower) + self.b * self.tracking
                + self.c * self.grad_error + self.d * self.displacement)


def merit_terms(problem: ConstrainedMinimaxProblem, state: "SolverState", iter_params: "IterParams",
                config: DiagConfig = DiagConfig()) -> Optional[MeritTerms]:
    """Components of ``V_k`` at ``state``; ``None`` if the inner solve fails.

    ``iter_params`` are those of the iteration about to run at ``state``;
    the lagged gradient error uses the parameters cached on the state.
    """
    if state.x_prev is None or state.d_x_prev is None or state.prev_params is None:
        raise ValueError("merit needs a state produced by at least one step")
    params = iter_params.penalty
    rep = inner_max_solve(problem, state.x, params, tol=config.inner_tol, y0=state.y)
    if not rep.converged:
        return None
    phi = psi_value(problem, state.x, rep.y_star, params)
    exact = psi_grad(problem, state.x_prev, state.y, state.prev_params.penalty)[0]
    err = state.d_x_prev - exact
    dy = state.y - rep.y_star
    dx = state.x - state.x_prev
    return MeritTerms(phi=phi, tracking=float(dy @ dy), grad_error=float(err @ err),
                      displacement=float(dx @ dx), a=iter_params.a, b=iter_params.b,
                      c=iter_params.c, d=iter_params.d)


def default_phi_lower(problem: ConstrainedMinimaxProblem, observed_phi: Sequence[float],
                      sigma0: float) -> float:
    """Running minimum of observed value-function values, less a margin
    covering the largest regularization term."""
    m = problem.set_y.max_norm
    return float(min(observed_phi)) - 0.5 * sigma0 * m * m - 1.0


def merit_value(problem: ConstrainedMinimaxProblem, state: "SolverState", iter_params: "IterParams",
                config: DiagConfig = DiagConfig(), phi_lower: Optional[float] = None) -> Optional[float]:
    terms = merit_terms(problem, state, iter_params, config)
    if terms is None:
        return None
    if phi_lower is None:
        phi_lower = config.phi_lower
    if phi_lower is None:
        phi_lower = default_phi_lower(problem, [terms.phi], iter_params.sigma)
    return terms.value(phi_lower)


def gap_displacements(problem: ConstrainedMinimaxProblem, x: Array, y: Array, params: PenaltyParams,
                      num_samples: int, rng: np.random.Generator) -> Array:
    """Per-sample joint projected-gradient displacements, shape (T, n + m)."""
    out = np.empty((num_samples, problem.dim_x + problem.dim_y))
    for i in range(num_samples):
        gx, gy = sample_psi_grad(problem, x, y, params, problem.draw_noise(rng))
        out[i, : problem.dim_x] = x - problem.set_x.project(x - gx)
        out[i, problem.dim_x:] = y - problem.set_y.project(y + gy)
    return out


def stationarity_gap_estimate(problem: ConstrainedMinimaxProblem, state: "SolverState",
                              params: PenaltyParams, num_samples: int = 1000,
                              rng: Optional[np.random.Generator] = None) -> float:
    """Squared norm of the sample-averaged joint generalized gradient of ``psi``.

    Deterministic problems use a single exact evaluation.
    """
    if num_samples < 1:
        raise ValueError(f"num_samples must be >= 1, got {num_samples}")
    if problem.is_deterministic:
        num_samples = 1
    if rng is None:
        rng = np.random.default_rng(0)
    g = gap_displacements(problem, state.x, state.y, params, num_samples, rng)
    mean = g.mean(axis=0)
    return float(mean @ mean)


def error_metrics(problem: ConstrainedMinimaxProblem, x: Array, y: Array, x0: Array,
                  y0: Array) -> tuple[float, float]:
    """Normalized solution error and inner-problem error.

    ``eps_x = ||x - x*||^2 / (||x0 - x*||^2 + 1)`` and
    ``eps_y = ||y - y*(x)||^2 / (||y0 - y*(x)||^2 + 1)``, where ``y*(x)`` is
    the exact maximizer of the constrained inner problem.
    """
    ref = problem.reference
    if ref is None:
        raise ValueError(f"problem {problem.name!r} has no analytic reference")
    dx = x - ref.x_star
    dx0 = x0 - ref.x_star
    ys = ref.y_star_of(x)
    dy = y - ys
    dy0 = y0 - ys
    return float(dx @ dx) / (float(dx0 @ dx0) + 1.0), float(dy @ dy) / (float(dy0 @ dy0) + 1.0)

