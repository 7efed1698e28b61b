"""Power-law parameter schedules for SPACO.

With iteration index ``k >= 1``::

    rho_k   = rho0   * k**t          sigma_k = sigma0 * k**-t
    alpha_k = alpha0 * k**(-6t - s)  beta_k  = beta0  * k**(-t - s)
    eta_k   = eta0   * k**-s

and merit weights ``a_k = k**-2t, b_k = k**-3t, c_k = k**-7t, d_k = k**-4t``.
The solver loop counter starts at 0 and evaluates the schedule at ``k + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from spaco.penalty import PenaltyParams


@dataclass(frozen=True)
class Schedule:
    rho0: float = 10.0
    sigma0: float = 1e-4
    alpha0: float = 0.1
    beta0: float = 0.1
    eta0: float = 1.0
    t: float = 0.05
    s: float = 0.2
    # Clamp beta_k to 1 / (lipschitz_guard * rho_k) when set.
    lipschitz_guard: Optional[float] = None

    def params_at(self, k: int) -> "IterParams":
        return params_at(self, k)


@dataclass(frozen=True)
class IterParams:
    k: int
    rho: float
    sigma: float
    alpha: float
    beta: float
    eta: float
    a: float
    b: float
    c: float
    d: float

    @property
    def penalty(self) -> PenaltyParams:
        return PenaltyParams(self.rho, self.sigma)


@dataclass
class ValidationResult:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate(schedule: Schedule) -> ValidationResult:
    """Check the exponent conditions of the descent analysis.

    Required: ``0 < t, s < 1``, ``s > 3t``, ``8t + s < 1``, positive base
    constants and ``eta0 <= 1``. Advisory: ``2s + 5t > 1`` (needed only for
    the asymptotic KKT guarantee); reported as a warning.
    """
    res = ValidationResult()
    t, s = schedule.t, schedule.s
    for name in ("rho0", "sigma0", "alpha0", "beta0", "eta0"):
        val = getattr(schedule, name)
        if not val > 0:
            res.violations.append(f"{name} must be positive (got {val})")
    if not schedule.eta0 <= 1:
        res.violations.append(f"eta0 must be <= 1 so that eta_k lies in (0, 1] (got {schedule.eta0})")
    if not 0 < t < 1:
        res.violations.append(f"t must lie in (0, 1) (got {t})")
    if not 0 < s < 1:
        res.violations.append(f"s must lie in (0, 1) (got {s})")
    if not s > 3 * t:
        res.violations.append(f"s > 3t fails ({s:g} <= {3 * t:g})")
    if not 8 * t + s < 1:
        res.violations.append(f"8t + s < 1 fails (8t + s = {8 * t + s:g})")
    if schedule.lipschitz_guard is not None and not schedule.lipschitz_guard > 0:
        res.violations.append(f"lipschitz_guard must be positive (got {schedule.lipschitz_guard})")
    if not 2 * s + 5 * t > 1:
        res.warnings.append(
            f"2s + 5t = {2 * s + 5 * t:g} <= 1: asymptotic KKT guarantee for accumulation points does not apply"
        )
    return res


def params_at(schedule: Schedule, k: int) -> IterParams:
    if k < 1:
        raise ValueError(f"schedule index must be >= 1, got {k}")
    t, s = schedule.t, schedule.s
    kf = float(k)
    kt = kf**t
    rho = schedule.rho0 * kt
    beta = schedule.beta0 * kf ** (-t - s)
    if schedule.lipschitz_guard is not None:
        beta = min(beta, 1.0 / (schedule.lipschitz_guard * rho))
    return IterParams(
        k=k,
        rho=rho,
        sigma=schedule.sigma0 / kt,
        alpha=schedule.alpha0 * kf ** (-6 * t - s),
        beta=beta,
        eta=schedule.eta0 * kf**-s,
        a=kf ** (-2 * t),
        b=kf ** (-3 * t),
        c=kf ** (-7 * t),
        d=kf ** (-4 * t),
    )
