"""Problem abstraction: feasible boxes, oracles, analytic references.

A :class:`ConstrainedMinimaxProblem` bundles everything a solver may query
about ``min_{x in X} max_{y in Y} {f(x, y) | c(x, y) <= 0}``: the deterministic
objective and its gradient, a stochastic gradient oracle driven by explicit
noise draws, the (deterministic) coupled constraint with its Jacobians, and
the two boxes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

Array = np.ndarray


class ConstraintKind(enum.Enum):
    INEQUALITY = "inequality"
    EQUALITY = "equality"


@dataclass(frozen=True, eq=False)
class BoxSet:
    """Axis-aligned box ``[lower, upper]``."""

    lower: Array
    upper: Array

    def __post_init__(self) -> None:
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError(
                f"box bounds must be 1-d with equal shapes, got {lower.shape} and {upper.shape}"
            )
        if np.any(lower > upper):
            bad = int(np.argmax(lower > upper))
            raise ValueError(f"lower[{bad}]={lower[bad]} exceeds upper[{bad}]={upper[bad]}")
        lower.flags.writeable = False
        upper.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def cube(cls, low: float, high: float, dim: int) -> "BoxSet":
        return cls(np.full(dim, float(low)), np.full(dim, float(high)))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> Array:
        return 0.5 * (self.lower + self.upper)

    @property
    def max_norm(self) -> float:
        """Largest Euclidean norm of any point of the box."""
        return float(np.linalg.norm(np.maximum(np.abs(self.lower), np.abs(self.upper))))

    def project(self, z: Array) -> Array:
        z = np.asarray(z, dtype=float)
        if z.shape != self.lower.shape:
            raise ValueError(f"dimension mismatch: point has shape {z.shape}, box has dim {self.dim}")
        return np.minimum(np.maximum(z, self.lower), self.upper)

    def contains(self, z: Array, slack: float = 0.0) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(np.all(z >= self.lower - slack) and np.all(z <= self.upper + slack))

    def sample(self, rng: np.random.Generator) -> Array:
        return rng.uniform(self.lower, self.upper)


def project(box: BoxSet, z: Array) -> Array:
    """Euclidean projection of ``z`` onto ``box`` (componentwise clamp)."""
    return box.project(z)


@dataclass(frozen=True, eq=False)
class StationaryPoint:
    x: Array
    y: Array
    lam: Array
    label: str = ""


@dataclass(frozen=True, eq=False)
class AnalyticReference:
    """Known solution data for a benchmark.

    ``y_star_of`` returns the exact maximizer of the *constrained* inner
    problem at ``x``. ``spurious_points`` are KKT points of the original
    problem that are not solutions; classification of basins measures
    distance against them.
    """

    x_star: Array
    y_star: Array
    y_star_of: Callable[[Array], Array]
    lambda_star: Optional[Array] = None
    spurious_points: tuple[StationaryPoint, ...] = ()
    phi_value: Optional[Callable[[Array], float]] = None

    @property
    def stationary_points(self) -> list[StationaryPoint]:
        pts = []
        if self.lambda_star is not None:
            pts.append(StationaryPoint(self.x_star, self.y_star, self.lambda_star, "solution"))
        pts.extend(self.spurious_points)
        return pts


def _no_noise(rng: np.random.Generator) -> None:
    return None


@dataclass(frozen=True, eq=False)
class ConstrainedMinimaxProblem:
    """Oracle bundle for a constrained stochastic minimax problem.

    ``sample_grad(x, y, xi)`` must be a deterministic function of its
    arguments: calling it twice with the same draw ``xi`` at two different
    points evaluates the same realization of ``F(., .; xi)`` there. Draws
    come from ``draw_noise(rng)``; a ``None`` draw means the exact gradient.
    """

    name: str
    set_x: BoxSet
    set_y: BoxSet
    f_value: Callable[[Array, Array], float]
    grad_f: Callable[[Array, Array], tuple[Array, Array]]
    c_value: Callable[[Array, Array], Array]
    c_jacobians: Callable[[Array, Array], tuple[Array, Array]]
    constraint_kinds: tuple[ConstraintKind, ...]
    sample_grad: Optional[Callable[[Array, Array, Any], tuple[Array, Array]]] = None
    draw_noise: Callable[[np.random.Generator], Any] = _no_noise
    noise_level: float = 0.0
    reference: Optional[AnalyticReference] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        kinds = tuple(ConstraintKind(k) for k in self.constraint_kinds)
        if not kinds:
            raise ValueError("at least one constraint component is required")
        object.__setattr__(self, "constraint_kinds", kinds)
        eq = np.array([k is ConstraintKind.EQUALITY for k in kinds])
        eq.flags.writeable = False
        object.__setattr__(self, "_equality_mask", eq)

    @property
    def dim_x(self) -> int:
        return self.set_x.dim

    @property
    def dim_y(self) -> int:
        return self.set_y.dim

    @property
    def num_constraints(self) -> int:
        return len(self.constraint_kinds)

    @property
    def equality_mask(self) -> Array:
        return self._equality_mask

    @property
    def is_deterministic(self) -> bool:
        return self.noise_level == 0.0

    def sample_grad_F(self, x: Array, y: Array, xi: Any) -> tuple[Array, Array]:
        if xi is None or self.sample_grad is None:
            return self.grad_f(x, y)
        return self.sample_grad(x, y, xi)

    def violation_terms(self, c: Array) -> Array:
        """``[c_i]_+`` for inequality components, ``c_i`` for equalities."""
        return np.where(self._equality_mask, c, np.maximum(c, 0.0))

    def constraint_violation(self, x: Array, y: Array) -> float:
        return float(np.linalg.norm(self.violation_terms(self.c_value(x, y))))


@dataclass
class OracleReport:
    passed: bool
    max_errors: dict[str, float]
    worst_points: dict[str, tuple[Array, Array]]
    failures: list[str] = field(default_factory=list)

    def __str__(self) -> str:
        head = "PASS" if self.passed else "FAIL"
        parts = [f"{k}={v:.3e}" for k, v in self.max_errors.items()]
        lines = [f"{head}: " + ", ".join(parts)]
        lines.extend(self.failures)
        return "\n".join(lines)


def central_difference(fun: Callable[[Array], Any], z: Array, step: float) -> Array:
    """Central-difference Jacobian of ``fun`` at ``z``; rows index outputs."""
    z = np.asarray(z, dtype=float)
    cols = []
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = step
        cols.append((np.asarray(fun(z + e), dtype=float) - np.asarray(fun(z - e), dtype=float)) / (2 * step))
    return np.stack(cols, axis=-1)


def _rel_err(analytic: Array, numeric: Array) -> float:
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = max(1.0, float(np.max(np.abs(analytic), initial=0.0)))
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def interior_points(problem: ConstrainedMinimaxProblem, num_points: int, margin: float,
                    rng: np.random.Generator) -> list[tuple[Array, Array]]:
    def shrink(box: BoxSet) -> BoxSet:
        pad = np.minimum(margin, 0.25 * (box.upper - box.lower))
        return BoxSet(box.lower + pad, box.upper - pad)

    bx, by = shrink(problem.set_x), shrink(problem.set_y)
    return [(bx.sample(rng), by.sample(rng)) for _ in range(num_points)]


def check_oracle_consistency(
    problem: ConstrainedMinimaxProblem,
    num_points: int = 20,
    fd_step: float = 1e-6,
    tol: float = 1e-5,
    seed: int = 0,
    points: Optional[Sequence[tuple[Array, Array]]] = None,
) -> OracleReport:
    """Compare analytic gradients and Jacobians against central differences.

    Blocks checked: ``grad_f_x``, ``grad_f_y``, ``jac_c_x``, ``jac_c_y``; for a
    zero-noise problem also ``sample_grad`` (stochastic oracle vs exact).
    """
    rng = np.random.default_rng(seed)
    if points is None:
        points = interior_points(problem, num_points, 10 * fd_step, rng)
    blocks = ["grad_f_x", "grad_f_y", "jac_c_x", "jac_c_y"]
    if problem.is_deterministic:
        blocks.append("sample_grad")
    max_err = {b: 0.0 for b in blocks}
    worst: dict[str, tuple[Array, Array]] = {}
    failures: list[str] = []

    for x, y in points:
        gx, gy = problem.grad_f(x, y)
        jx, jy = problem.c_jacobians(x, y)
        analytic = {"grad_f_x": gx, "grad_f_y": gy, "jac_c_x": jx, "jac_c_y": jy}
        bad = [k for k, v in analytic.items() if not np.all(np.isfinite(v))]
        if bad:
            failures.append(f"non-finite {', '.join(bad)} at x={x.tolist()}, y={y.tolist()}")
            for k in bad:
                max_err[k] = np.inf
                worst[k] = (x, y)
            continue
        numeric = {
            "grad_f_x": central_difference(lambda u: problem.f_value(u, y), x, fd_step),
            "grad_f_y": central_difference(lambda v: problem.f_value(x, v), y, fd_step),
            "jac_c_x": central_difference(lambda u: problem.c_value(u, y), x, fd_step),
            "jac_c_y": central_difference(lambda v: problem.c_value(x, v), y, fd_step),
        }
        for k in analytic:
            err = _rel_err(analytic[k], numeric[k])
            if not np.isfinite(err):
                failures.append(f"non-finite finite difference for {k} at x={x.tolist()}, y={y.tolist()}")
            if not err <= max_err[k]:
                max_err[k] = err
                worst[k] = (x, y)
        if "sample_grad" in max_err:
            sx, sy = problem.sample_grad_F(x, y, problem.draw_noise(rng))
            err = max(_rel_err(gx, sx), _rel_err(gy, sy))
            if err > max_err["sample_grad"]:
                max_err["sample_grad"] = err
                worst["sample_grad"] = (x, y)

    for k, v in max_err.items():
        if not v <= tol:
            x, y = worst[k]
            failures.append(f"{k}: max relative error {v:.3e} > {tol:.1e} at x={x.tolist()}, y={y.tolist()}")
    return OracleReport(passed=not failures, max_errors=max_err, worst_points=worst, failures=failures)
