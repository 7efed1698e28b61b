"""SPACO and two baselines sharing one trace and stopping interface.

* :func:`spaco_run` -- single-loop stochastic penalty method: one projected
  ascent step on ``y`` and one momentum-corrected projected descent step on
  ``x`` per iteration, with growing penalty and vanishing regularization.
* :func:`gda_fp_run` -- alternating stochastic GDA on ``psi`` at a fixed
  penalty and no regularization.
* :func:`minminmax_run` -- primal-dual descent-ascent on the Lagrangian
  ``f - lam . c`` over ``(x, lam)`` and ``y``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Sequence

import numpy as np

from spaco.diagnostics import (
    DiagConfig,
    MeritTerms,
    TraceRow,
    default_phi_lower,
    error_metrics,
    gen_grad_residual,
    kkt_residual,
    merit_terms,
    multiplier_estimate,
    stationarity_gap_estimate,
)
from spaco.penalty import PenaltyParams, psi_grad, sample_psi_grad
from spaco.problem import Array, ConstrainedMinimaxProblem
from spaco.schedules import IterParams, Schedule, params_at


class SolverAbort(FloatingPointError):
    pass


class StopReason(enum.Enum):
    MAX_ITERS = "MaxIters"
    TARGET_EPS = "TargetEps"
    RESIDUAL_TOL = "ResidualTol"
    ABORTED = "Aborted"


@dataclass
class SolverState:
    x: Array
    y: Array
    rng: np.random.Generator
    k: int = 0
    d_x_prev: Optional[Array] = None
    x_prev: Optional[Array] = None
    prev_params: Optional[IterParams] = None
    lam: Optional[Array] = None


@dataclass(frozen=True)
class StopCriteria:
    """Stopping rules, checked in the order target_eps, residual_tol, max_iters.

    ``residual_measure`` picks the trace column that ``residual_tol`` applies
    to: the squared stationarity gap (``"gap"``) or the KKT residual (``"kkt"``).
    """

    max_iters: int
    target_eps: Optional[float] = None
    residual_tol: Optional[float] = None
    residual_measure: str = "gap"

    def __post_init__(self) -> None:
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.residual_measure not in ("kkt", "gap"):
            raise ValueError(f"unknown residual measure {self.residual_measure!r}")


@dataclass
class RunTrace:
    rows: list[TraceRow]
    final_state: SolverState
    stop_reason: StopReason
    x0: Array
    y0: Array
    lambda_cap_hit: bool = False
    header: dict[str, Any] = field(default_factory=dict)
    abort_message: Optional[str] = None

    @property
    def iterations(self) -> int:
        return self.final_state.k


def _finite(*arrays: Array) -> bool:
    return all(np.isfinite(a).all() for a in arrays)


def spaco_step(problem: ConstrainedMinimaxProblem, schedule: Schedule, state: SolverState) -> SolverState:
    """One SPACO iteration; returns the successor state.

    The y-sample is drawn before the x-sample. Both evaluations in the
    momentum correction reuse the x-sample; the lagged one uses the previous
    iteration's penalty parameters.
    """
    p = params_at(schedule, state.k + 1)
    pen = p.penalty
    xi_y = problem.draw_noise(state.rng)
    _, d_y = sample_psi_grad(problem, state.x, state.y, pen, xi_y)
    if not _finite(d_y):
        raise SolverAbort(f"non-finite y-direction at iteration {state.k}")
    y_new = problem.set_y.project(state.y + p.beta * d_y)

    xi_x = problem.draw_noise(state.rng)
    g_new = sample_psi_grad(problem, state.x, y_new, pen, xi_x)[0]
    if state.d_x_prev is None:
        d_x = g_new
    else:
        g_old = sample_psi_grad(problem, state.x_prev, state.y, state.prev_params.penalty, xi_x)[0]
        d_x = (1.0 - p.eta) * (state.d_x_prev - g_old) + g_new
    if not _finite(d_x):
        raise SolverAbort(f"non-finite x-direction at iteration {state.k}")
    x_new = problem.set_x.project(state.x - p.alpha * d_x)
    return SolverState(x=x_new, y=y_new, rng=state.rng, k=state.k + 1, d_x_prev=d_x,
                       x_prev=state.x, prev_params=p, lam=state.lam)


class _Recorder:
    """Builds trace rows and evaluates stop rules for a run."""

    def __init__(self, problem: ConstrainedMinimaxProblem, stop: StopCriteria, diag: DiagConfig,
                 x0: Array, y0: Array, seed: int):
        self.problem = problem
        self.stop = stop
        self.diag = diag
        self.x0 = x0
        self.y0 = y0
        self.rows: list[TraceRow] = []
        self.merit: list[Optional[MeritTerms]] = []
        self.gap_rng = np.random.default_rng([seed, 1])
        self.has_reference = problem.reference is not None

    def due(self, k_done: int) -> bool:
        # k_done iterations have completed; the row is indexed by the last loop index.
        return (k_done - 1) % self.diag.stride == 0 or k_done == self.stop.max_iters

    def record(self, state: SolverState, lam: Array, g_x: Array, alpha: float,
               gap_params: Optional[PenaltyParams] = None,
               merit_params: Optional[IterParams] = None) -> Optional[StopReason]:
        prob, stop, diag = self.problem, self.stop, self.diag
        eps_x = eps_y = None
        if self.has_reference:
            eps_x, eps_y = error_metrics(prob, state.x, state.y, self.x0, self.y0)
        row = TraceRow(
            k=state.k - 1,
            eps_x=eps_x,
            eps_y=eps_y,
            gen_grad_residual=gen_grad_residual(state.x, g_x, alpha, prob.set_x),
            constraint_violation=prob.constraint_violation(state.x, state.y),
            lambda_norm=float(np.linalg.norm(lam)),
        )
        stop_on = stop.residual_measure if stop.residual_tol is not None else None
        if diag.kkt or stop_on == "kkt":
            row.kkt_residual = kkt_residual(prob, state.x, state.y, lam)
        if (diag.gap or stop_on == "gap") and gap_params is not None:
            row.gap_estimate = stationarity_gap_estimate(prob, state, gap_params, diag.gap_samples,
                                                         self.gap_rng)
        terms = None
        if diag.merit and merit_params is not None and state.x_prev is not None:
            terms = merit_terms(prob, state, merit_params, diag)
        self.merit.append(terms)
        self.rows.append(row)
        return self.check(row)

    def check(self, row: TraceRow) -> Optional[StopReason]:
        stop = self.stop
        if stop.target_eps is not None and row.max_eps is not None and row.max_eps <= stop.target_eps:
            return StopReason.TARGET_EPS
        if stop.residual_tol is not None:
            value = row.kkt_residual if stop.residual_measure == "kkt" else row.gap_estimate
            if value is not None and value <= stop.residual_tol:
                return StopReason.RESIDUAL_TOL
        return None

    def finalize(self, sigma0: float) -> dict[str, Any]:
        observed = [m.phi for m in self.merit if m is not None]
        if not observed:
            return {}
        lower = self.diag.phi_lower
        if lower is None:
            lower = default_phi_lower(self.problem, observed, sigma0)
        for row, terms in zip(self.rows, self.merit):
            if terms is not None:
                row.merit_value = terms.value(lower)
        return {"phi_lower": lower,
                "merit_note": "merit weights from unclamped power laws"}


def _init_points(problem: ConstrainedMinimaxProblem, init: Sequence[Array]) -> tuple[Array, Array]:
    x0 = problem.set_x.project(np.asarray(init[0], dtype=float))
    y0 = problem.set_y.project(np.asarray(init[1], dtype=float))
    return x0, y0


def _drive(problem: ConstrainedMinimaxProblem, state: SolverState, stop: StopCriteria, rec: _Recorder,
           step: Callable[[SolverState], SolverState],
           row_inputs: Callable[[SolverState], tuple],
           ) -> tuple[SolverState, StopReason, Optional[str]]:
    reason = StopReason.MAX_ITERS
    message = None
    while state.k < stop.max_iters:
        try:
            state = step(state)
        except (SolverAbort, FloatingPointError) as exc:
            message = str(exc)
            reason = StopReason.ABORTED
            break
        if rec.due(state.k):
            hit = rec.record(state, *row_inputs(state))
            if hit is not None:
                reason = hit
                break
    return state, reason, message


def spaco_run(problem: ConstrainedMinimaxProblem, schedule: Schedule, init: Sequence[Array],
              stop: StopCriteria, diag_config: DiagConfig = DiagConfig(), seed: int = 0) -> RunTrace:
    """Run SPACO from ``init = (x0, y0)`` (projected onto the boxes)."""
    x0, y0 = _init_points(problem, init)
    state = SolverState(x=x0, y=y0, rng=np.random.default_rng(seed))
    rec = _Recorder(problem, stop, diag_config, x0, y0, seed)

    def row_inputs(st: SolverState):
        p = st.prev_params
        lam = multiplier_estimate(problem, st.x, st.y, p.rho)
        g_x = psi_grad(problem, st.x, st.y, p.penalty)[0]
        nxt = params_at(schedule, st.k + 1)
        return lam, g_x, p.alpha, nxt.penalty, nxt

    state, reason, message = _drive(problem, state, stop, rec,
                                    lambda st: spaco_step(problem, schedule, st), row_inputs)
    header = rec.finalize(schedule.sigma0)
    header.update(solver="spaco", seed=seed)
    return RunTrace(rows=rec.rows, final_state=state, stop_reason=reason, x0=x0, y0=y0,
                    header=header, abort_message=message)


def gda_fp_run(problem: ConstrainedMinimaxProblem, fixed_rho: float, alpha: float, beta: float,
               init: Sequence[Array], stop: StopCriteria, diag_config: DiagConfig = DiagConfig(),
               seed: int = 0) -> RunTrace:
    """Alternating projected GDA on ``psi`` with constant penalty and ``sigma = 0``.

    Each half-step draws its own sample.
    """
    pen = PenaltyParams(fixed_rho, 0.0)
    x0, y0 = _init_points(problem, init)
    state = SolverState(x=x0, y=y0, rng=np.random.default_rng(seed))
    rec = _Recorder(problem, stop, diag_config, x0, y0, seed)

    def step(st: SolverState) -> SolverState:
        _, gy = sample_psi_grad(problem, st.x, st.y, pen, problem.draw_noise(st.rng))
        y_new = problem.set_y.project(st.y + beta * gy)
        gx = sample_psi_grad(problem, st.x, y_new, pen, problem.draw_noise(st.rng))[0]
        if not _finite(gx, gy):
            raise SolverAbort(f"non-finite direction at iteration {st.k}")
        x_new = problem.set_x.project(st.x - alpha * gx)
        return replace(st, x=x_new, y=y_new, k=st.k + 1, x_prev=st.x, d_x_prev=gx)

    def row_inputs(st: SolverState):
        lam = multiplier_estimate(problem, st.x, st.y, fixed_rho)
        return lam, psi_grad(problem, st.x, st.y, pen)[0], alpha, pen

    state, reason, message = _drive(problem, state, stop, rec, step, row_inputs)
    return RunTrace(rows=rec.rows, final_state=state, stop_reason=reason, x0=x0, y0=y0,
                    header={"solver": "gda_fp", "seed": seed}, abort_message=message)


def minminmax_run(problem: ConstrainedMinimaxProblem, alpha_x: float, beta_y: float, gamma_lambda: float,
                  inner_steps: int, init: Sequence[Array], stop: StopCriteria,
                  diag_config: DiagConfig = DiagConfig(), seed: int = 0,
                  lambda_cap: float = 1e6) -> RunTrace:
    """Single-loop primal-dual method on ``min_{x, lam >= 0} max_y f - lam . c``.

    ``init`` is ``(x0, y0)`` or ``(x0, y0, lam0)``; ``lam0`` defaults to zero.
    Per outer iteration: ``inner_steps`` projected ascent steps on ``y``, then
    a simultaneous descent step on ``x`` and on ``lam`` (whose gradient is
    ``-c``). Inequality multipliers are projected onto ``lam >= 0``; all
    multipliers are clipped to ``[-lambda_cap, lambda_cap]``.
    """
    if not gamma_lambda > 0:
        raise ValueError(f"gamma_lambda must be positive, got {gamma_lambda}")
    if inner_steps < 1:
        raise ValueError(f"inner_steps must be >= 1, got {inner_steps}")
    x0, y0 = _init_points(problem, init)
    lam0 = np.zeros(problem.num_constraints) if len(init) < 3 else np.asarray(init[2], dtype=float).copy()
    ineq = ~problem.equality_mask
    lam0 = np.where(ineq, np.maximum(lam0, 0.0), lam0)
    state = SolverState(x=x0, y=y0, rng=np.random.default_rng(seed), lam=lam0)
    rec = _Recorder(problem, stop, diag_config, x0, y0, seed)
    cap_hit = False

    def step(st: SolverState) -> SolverState:
        nonlocal cap_hit
        x, y, lam = st.x, st.y, st.lam
        for _ in range(inner_steps):
            _, gy = problem.sample_grad_F(x, y, problem.draw_noise(st.rng))
            _, jy = problem.c_jacobians(x, y)
            y = problem.set_y.project(y + beta_y * (gy - jy.T @ lam))
        gx, _ = problem.sample_grad_F(x, y, problem.draw_noise(st.rng))
        jx, _ = problem.c_jacobians(x, y)
        lx = gx - jx.T @ lam
        c = problem.c_value(x, y)
        if not _finite(lx, c, y):
            raise SolverAbort(f"non-finite direction at iteration {st.k}")
        x_new = problem.set_x.project(x - alpha_x * lx)
        lam_new = lam + gamma_lambda * c
        lam_new = np.where(ineq, np.maximum(lam_new, 0.0), lam_new)
        if np.any(np.abs(lam_new) > lambda_cap):
            cap_hit = True
            lam_new = np.clip(lam_new, -lambda_cap, lambda_cap)
        return replace(st, x=x_new, y=y, lam=lam_new, k=st.k + 1, x_prev=x, d_x_prev=lx)

    def row_inputs(st: SolverState):
        gx, _ = problem.grad_f(st.x, st.y)
        jx, _ = problem.c_jacobians(st.x, st.y)
        return st.lam, gx - jx.T @ st.lam, alpha_x

    state, reason, message = _drive(problem, state, stop, rec, step, row_inputs)
    return RunTrace(rows=rec.rows, final_state=state, stop_reason=reason, x0=x0, y0=y0,
                    lambda_cap_hit=cap_hit, header={"solver": "minminmax", "seed": seed},
                    abort_message=message)
