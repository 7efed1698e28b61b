"""Quadratic-penalty, Tikhonov-regularized surrogate of the inner problem.

For penalty weight ``rho`` and regularization ``sigma``::

    psi(x, y) = f(x, y) - rho/2 * sum_i p_i(x, y) - sigma/2 * ||y||^2

with ``p_i = [c_i]_+^2`` for inequalities and ``p_i = c_i^2`` for equalities.
Maximizing over ``y in Y`` gives the smooth value function ``phi(x)`` whose
gradient is the x-partial of ``psi`` at the unique maximizer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from spaco.problem import Array, ConstrainedMinimaxProblem


class InnerSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class PenaltyParams:
    rho: float
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")


@dataclass(frozen=True)
class InnerSolveReport:
    y_star: Array
    iterations: int
    final_ascent_residual: float
    converged: bool
    step: float


def _check_finite(*values: Any) -> None:
    for v in values:
        if not np.isfinite(v).all():
            raise FloatingPointError("non-finite oracle value")


def penalty_value(problem: ConstrainedMinimaxProblem, x: Array, y: Array) -> float:
    """``sum_i p_i(x, y)``, without the ``rho/2`` factor."""
    pi = problem.violation_terms(problem.c_value(x, y))
    return float(pi @ pi)


def psi_value(problem: ConstrainedMinimaxProblem, x: Array, y: Array, params: PenaltyParams) -> float:
    f = problem.f_value(x, y)
    c = problem.c_value(x, y)
    _check_finite(f, c)
    pi = problem.violation_terms(c)
    return float(f - 0.5 * params.rho * (pi @ pi) - 0.5 * params.sigma * (y @ y))


def _add_penalty(problem: ConstrainedMinimaxProblem, x: Array, y: Array, params: PenaltyParams,
                 gx: Array, gy: Array) -> tuple[Array, Array]:
    c = problem.c_value(x, y)
    pi = problem.violation_terms(c)
    if pi.any():
        jx, jy = problem.c_jacobians(x, y)
        gx = gx - params.rho * (jx.T @ pi)
        gy = gy - params.rho * (jy.T @ pi)
    if params.sigma:
        gy = gy - params.sigma * y
    return gx, gy


def psi_grad(problem: ConstrainedMinimaxProblem, x: Array, y: Array,
             params: PenaltyParams) -> tuple[Array, Array]:
    gx, gy = problem.grad_f(x, y)
    return _add_penalty(problem, x, y, params, gx, gy)


def sample_psi_grad(problem: ConstrainedMinimaxProblem, x: Array, y: Array, params: PenaltyParams,
                    xi: Any) -> tuple[Array, Array]:
    """Stochastic gradient of ``psi``; only the objective part sees ``xi``."""
    gx, gy = problem.sample_grad_F(x, y, xi)
    return _add_penalty(problem, x, y, params, gx, gy)


def _grad_y(problem: ConstrainedMinimaxProblem, x: Array, y: Array, params: PenaltyParams) -> Array:
    return psi_grad(problem, x, y, params)[1]


def estimate_curvature(problem: ConstrainedMinimaxProblem, x: Array, y: Array, params: PenaltyParams,
                       probes: int = 8, h: float = 1e-5, seed: int = 0) -> float:
    """Upper estimate of the Lipschitz constant of ``y -> grad_y psi(x, y)``.

    Power iteration on finite-difference Hessian actions at ``y``, combined
    with ``rho * ||dc/dy||_2^2 + sigma`` so that an inactive penalty at the
    probe point still contributes its curvature.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(y.shape)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(probes):
        hv = (_grad_y(problem, x, y + h * v, params) - _grad_y(problem, x, y - h * v, params)) / (2 * h)
        nrm = float(np.linalg.norm(hv))
        if nrm == 0.0 or not np.isfinite(nrm):
            break
        lam = nrm
        v = hv / nrm
    _, jy = problem.c_jacobians(x, y)
    bound = params.rho * float(np.linalg.norm(jy, 2)) ** 2 + params.sigma
    return max(lam, bound, 1e-12)


def inner_max_solve(problem: ConstrainedMinimaxProblem, x: Array, params: PenaltyParams,
                    tol: float = 1e-8, max_iter: int = 200_000,
                    y0: Optional[Array] = None) -> InnerSolveReport:
    """Maximize ``y -> psi(x, y)`` over ``Y`` by accelerated projected ascent.

    Uses Nesterov extrapolation with gradient-based restart and a
    backtracking safeguard on the curvature estimate. Stops when the
    projected-gradient residual ``||y - P_Y(y + b g)|| / b`` falls to ``tol``.
    """
    box = problem.set_y
    y = box.center.copy() if y0 is None else box.project(np.asarray(y0, dtype=float))
    step = 0.9 / estimate_curvature(problem, x, y, params)

    def value(v: Array) -> float:
        return psi_value(problem, x, v, params)

    def residual(v: Array, g: Array) -> float:
        return float(np.linalg.norm(v - box.project(v + step * g))) / step

    z = y.copy()
    theta = 1.0
    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        gz = _grad_y(problem, x, z, params)
        fz = value(z)
        while True:
            y_new = box.project(z + step * gz)
            d = y_new - z
            if value(y_new) >= fz + gz @ d - (0.5 / step) * (d @ d) - 1e-12 * (1.0 + abs(fz)):
                break
            step *= 0.5
        g_new = _grad_y(problem, x, y_new, params)
        res = residual(y_new, g_new)
        if res <= tol:
            y = y_new
            break
        theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
        if gz @ (y_new - y) < 0:
            theta_new = 1.0
            z = y_new.copy()
        else:
            z = box.project(y_new + ((theta - 1.0) / theta_new) * (y_new - y))
        y, theta = y_new, theta_new
    return InnerSolveReport(y_star=y, iterations=it, final_ascent_residual=res,
                            converged=bool(res <= tol), step=step)


def phi_grad(problem: ConstrainedMinimaxProblem, x: Array, params: PenaltyParams,
             inner_tol: float = 1e-8, y0: Optional[Array] = None,
             max_iter: int = 200_000) -> Array:
    """Gradient of the smooth value function, evaluated at the inner maximizer."""
    rep = inner_max_solve(problem, x, params, tol=inner_tol, max_iter=max_iter, y0=y0)
    if not rep.converged:
        raise InnerSolveError(
            f"inner maximization did not converge: residual {rep.final_ascent_residual:.3e} "
            f"after {rep.iterations} iterations"
        )
    return psi_grad(problem, x, rep.y_star, params)[0]
