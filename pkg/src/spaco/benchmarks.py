"""Synthetic benchmark problems with closed-form references."""

from __future__ import annotations

import enum
from typing import Callable, Optional

import numpy as np

from spaco.problem import (
    AnalyticReference,
    Array,
    BoxSet,
    ConstrainedMinimaxProblem,
    ConstraintKind,
    StationaryPoint,
)


class BasinClass(enum.Enum):
    TRUE_SOLUTION = "TrueSolution"
    SPURIOUS = "Spurious"
    NEITHER = "Neither"


def _quartic_problem(n: int, delta: float, name: str, seed: Optional[int],
                     phi: Optional[Callable[[Array], float]] = None) -> ConstrainedMinimaxProblem:
    # f = n/2 (|x|^2/n - 1)^2 - |y - e|^2/2 + x.(y + w)/2,  c = e.y - |x|^2 <= 0
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    if delta < 0:
        raise ValueError(f"noise level must be nonnegative, got {delta}")
    nf = float(n)

    def f_value(x: Array, y: Array) -> float:
        q = x @ x / nf - 1.0
        r = y - 1.0
        return float(0.5 * nf * q * q - 0.5 * (r @ r) + 0.5 * (x @ y))

    def grad_f(x: Array, y: Array) -> tuple[Array, Array]:
        q = x @ x / nf - 1.0
        return 2.0 * q * x + 0.5 * y, 1.0 - y + 0.5 * x

    def sample_grad(x: Array, y: Array, w: Array) -> tuple[Array, Array]:
        gx, gy = grad_f(x, y)
        return gx + 0.5 * w, gy

    def draw_noise(rng: np.random.Generator) -> Optional[Array]:
        if delta == 0.0:
            return None
        return delta * rng.standard_normal(n)

    def c_value(x: Array, y: Array) -> Array:
        return np.array([y.sum() - x @ x])

    def c_jacobians(x: Array, y: Array) -> tuple[Array, Array]:
        return (-2.0 * x)[None, :], np.ones((1, n))

    def y_star_of(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return np.full(n, (2.0 * (x @ x) - x.sum()) / (2.0 * nf)) + 0.5 * x

    x_star = np.full(n, -0.75)
    ref = AnalyticReference(
        x_star=x_star,
        y_star=np.full(n, 9.0 / 16.0),
        y_star_of=y_star_of,
        lambda_star=np.array([1.0 / 16.0]),
        spurious_points=(StationaryPoint(np.zeros(n), np.zeros(n), np.array([1.0]), "spurious"),),
        phi_value=phi or (lambda x: f_value(np.asarray(x, dtype=float), y_star_of(x))),
    )
    return ConstrainedMinimaxProblem(
        name=name,
        set_x=BoxSet.cube(-0.75, 1.25, n),
        set_y=BoxSet.cube(-10.0, 10.0, n),
        f_value=f_value,
        grad_f=grad_f,
        c_value=c_value,
        c_jacobians=c_jacobians,
        constraint_kinds=(ConstraintKind.INEQUALITY,),
        sample_grad=sample_grad,
        draw_noise=draw_noise,
        noise_level=float(delta),
        reference=ref,
        metadata={"n": n, "delta": float(delta), "seed": seed},
    )


def toy2d_phi(x: Array) -> float:
    """Closed-form value function of the two-dimensional example."""
    x = np.asarray(x, dtype=float)
    q, s = x @ x, x.sum()
    return float(q / 8.0 + (s / 4.0) * (q - s / 4.0))


def make_toy2d() -> ConstrainedMinimaxProblem:
    """Deterministic 2-d example with a true solution and a spurious KKT point."""
    return _quartic_problem(2, 0.0, "toy2d", None, phi=toy2d_phi)


def make_nonlinear(n: int, delta: float = 1.0, seed: Optional[int] = None) -> ConstrainedMinimaxProblem:
    """n-dimensional stochastic extension of the 2-d example.

    Gaussian noise ``w ~ N(0, delta^2 I)`` enters only the x-gradient (as
    ``w / 2``). ``seed`` is recorded but unused: the problem has no random data.
    """
    return _quartic_problem(n, delta, "nonlinear", seed)


def make_linear(n: int, delta: float = 1.0, seed: int = 0) -> ConstrainedMinimaxProblem:
    """Quadratic problem with one linear equality coupling x, y1 and y2.

    ``A = M M^T / n + I`` with ``M_ij ~ N(0, 1)`` drawn from ``seed``. The
    stochastic x-gradient adds ``(W + W^T)/2 @ x`` with ``W_ij ~ N(0, delta^2)``.
    """
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    if delta < 0:
        raise ValueError(f"noise level must be nonnegative, got {delta}")
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, n))
    a_bar = m @ m.T / n + np.eye(n)
    a_bar.flags.writeable = False
    e = np.ones(n)

    def split(y: Array) -> tuple[Array, Array]:
        return y[:n], y[n:]

    def f_value(x: Array, y: Array) -> float:
        y1, y2 = split(y)
        r = y2 + 2.0 * x + 1.0
        return float(0.5 * (x @ a_bar @ x) - (0.5 * (y1 @ y1) - x @ y1 + y2.sum() + 0.5 * (r @ r)))

    def grad_f(x: Array, y: Array) -> tuple[Array, Array]:
        y1, y2 = split(y)
        r = y2 + 2.0 * x + 1.0
        gx = a_bar @ x + y1 - 2.0 * r
        return gx, np.concatenate([x - y1, -1.0 - r])

    def sample_grad(x: Array, y: Array, w: Array) -> tuple[Array, Array]:
        gx, gy = grad_f(x, y)
        return gx + 0.5 * (w @ x + w.T @ x), gy

    def draw_noise(rng: np.random.Generator) -> Optional[Array]:
        if delta == 0.0:
            return None
        return delta * rng.standard_normal((n, n))

    def c_value(x: Array, y: Array) -> Array:
        return np.array([x.sum() + y.sum()])

    def c_jacobians(x: Array, y: Array) -> tuple[Array, Array]:
        return np.ones((1, n)), np.ones((1, 2 * n))

    def y_star_of(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return np.concatenate([x + e, -2.0 * x - e])

    x_star = -2.0 * np.linalg.solve(a_bar + np.eye(n), e)
    ref = AnalyticReference(
        x_star=x_star,
        y_star=y_star_of(x_star),
        y_star_of=y_star_of,
        lambda_star=np.array([-1.0]),
    )
    return ConstrainedMinimaxProblem(
        name="linear",
        set_x=BoxSet.cube(-10.0, 10.0, n),
        set_y=BoxSet.cube(-20.0, 20.0, 2 * n),
        f_value=f_value,
        grad_f=grad_f,
        c_value=c_value,
        c_jacobians=c_jacobians,
        constraint_kinds=(ConstraintKind.EQUALITY,),
        sample_grad=sample_grad,
        draw_noise=draw_noise,
        noise_level=float(delta),
        reference=ref,
        metadata={"n": n, "delta": float(delta), "seed": seed, "a_bar": a_bar},
    )


def make_problem(name: str, n: Optional[int] = None, delta: float = 0.0,
                 seed: int = 0) -> ConstrainedMinimaxProblem:
    if name == "toy2d":
        return make_toy2d()
    if name == "nonlinear":
        return make_nonlinear(100 if n is None else n, delta, seed)
    if name == "linear":
        return make_linear(100 if n is None else n, delta, seed)
    raise ValueError(f"unknown problem {name!r}; expected one of toy2d, nonlinear, linear")


def basin_errors(problem: ConstrainedMinimaxProblem, x: Array, y: Array) -> tuple[float, float]:
    """``(E_opt, E_spur)``: max of x- and y-distances to the solution and to
    the nearest registered spurious point."""
    ref = problem.reference
    if ref is None or not ref.spurious_points:
        raise ValueError(f"problem {problem.name!r} has no registered spurious points")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def dist(px: Array, py: Array) -> float:
        return max(float(np.linalg.norm(x - px)), float(np.linalg.norm(y - py)))

    return dist(ref.x_star, ref.y_star), min(dist(p.x, p.y) for p in ref.spurious_points)


def classify_basin(problem: ConstrainedMinimaxProblem, x_final: Array, y_final: Array,
                   radius: float = 0.1) -> BasinClass:
    e_opt, e_spur = basin_errors(problem, x_final, y_final)
    if e_opt <= radius and e_spur <= radius:
        raise ValueError(f"radius {radius} too large: point is within range of both the solution and a spurious point")
    if e_opt <= radius:
        return BasinClass.TRUE_SOLUTION
    if e_spur <= radius:
        return BasinClass.SPURIOUS
    return BasinClass.NEITHER
