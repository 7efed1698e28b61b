import io

import numpy as np
import pytest

from spaco import (
    BoxSet,
    DiagConfig,
    PenaltyParams,
    Schedule,
    StopCriteria,
    TraceRow,
    error_metrics,
    gen_grad_residual,
    kkt_residual,
    make_linear,
    make_nonlinear,
    merit_value,
    multiplier_estimate,
    params_at,
    phi_grad,
    spaco_run,
    stationarity_gap_estimate,
)
from spaco.diagnostics import TRACE_COLUMNS, gap_displacements, merit_terms, read_trace_csv, write_trace_csv
from spaco.problem import AnalyticReference, ConstrainedMinimaxProblem
from spaco.solvers import SolverState

XS = np.full(2, -0.75)


def test_gen_grad_residual_interior_zero_gradient():
    assert gen_grad_residual(np.zeros(2), np.zeros(2), 0.1, BoxSet.cube(-1, 1, 2)) == 0.0


def test_gen_grad_residual_normal_cone_absorbs_outward_gradient():
    box = BoxSet.cube(-1, 1, 2)
    # descent along -g pushes further below the lower bound
    assert gen_grad_residual(np.array([-1.0, -1.0]), np.array([0.5, 2.0]), 0.3, box) == 0.0


def test_gen_grad_residual_step_invariance_at_interior_point():
    box = BoxSet.cube(-1, 1, 3)
    x, g = np.array([0.1, -0.2, 0.3]), np.array([0.5, 0.1, -0.4])
    assert gen_grad_residual(x, g, 0.01, box) == pytest.approx(np.linalg.norm(g), rel=1e-12)
    assert gen_grad_residual(x, g, 0.1, box) == pytest.approx(gen_grad_residual(x, g, 0.01, box), rel=1e-12)


def test_gen_grad_residual_at_lemma_point(toy):
    g = phi_grad(toy, XS, PenaltyParams(1e3))
    assert gen_grad_residual(XS, g, 0.1, toy.set_x) <= 1e-3


def test_kkt_residual_at_true_and_spurious_points(toy):
    assert kkt_residual(toy, XS, np.full(2, 9 / 16), np.array([1 / 16])) <= 1e-10
    assert kkt_residual(toy, np.zeros(2), np.zeros(2), np.array([1.0])) <= 1e-10


def test_kkt_residual_positive_at_interior_nonstationary_point(toy):
    assert kkt_residual(toy, np.array([0.3, 0.2]), np.array([-1.0, 0.4]), np.array([0.2])) > 0


def test_kkt_rejects_negative_inequality_multiplier(toy):
    with pytest.raises(ValueError):
        kkt_residual(toy, XS, np.zeros(2), np.array([-1.0]))


def test_multiplier_estimate_zero_when_feasible(toy):
    np.testing.assert_array_equal(multiplier_estimate(toy, np.ones(2), np.zeros(2), 10.0), [0.0])


def test_multiplier_estimate_follows_sign_for_equality():
    p = make_linear(2, 0.0)
    assert multiplier_estimate(p, np.ones(2), np.ones(4), 3.0)[0] > 0
    assert multiplier_estimate(p, -np.ones(2), -np.ones(4), 3.0)[0] < 0


def test_error_metrics_definition(toy):
    ref = toy.reference
    assert error_metrics(toy, ref.x_star, ref.y_star_of(ref.x_star), XS, np.zeros(2)) == (0.0, 0.0)
    x0 = ref.x_star + np.array([1.0, 0.0])
    ex, _ = error_metrics(toy, x0, ref.y_star_of(x0), x0, np.zeros(2))
    assert ex == 0.5


def test_error_metrics_unchanged_by_inactive_padding(toy):
    ref = toy.reference

    def pad(v, value=0.0):
        return np.append(v, value)

    padded = ConstrainedMinimaxProblem(
        name="padded", set_x=BoxSet(pad(toy.set_x.lower, -1.0), pad(toy.set_x.upper, 1.0)),
        set_y=toy.set_y, f_value=lambda x, y: toy.f_value(x[:2], y),
        grad_f=lambda x, y: (pad(toy.grad_f(x[:2], y)[0]), toy.grad_f(x[:2], y)[1]),
        c_value=lambda x, y: toy.c_value(x[:2], y),
        c_jacobians=lambda x, y: (np.hstack([toy.c_jacobians(x[:2], y)[0], [[0.0]]]), toy.c_jacobians(x[:2], y)[1]),
        constraint_kinds=toy.constraint_kinds,
        reference=AnalyticReference(pad(ref.x_star), ref.y_star, lambda x: ref.y_star_of(x[:2])),
    )
    x, y, x0, y0 = np.array([0.2, -0.3]), np.array([0.5, 1.0]), np.array([0.1, 0.1]), np.zeros(2)
    assert error_metrics(padded, pad(x), y, pad(x0), y0) == error_metrics(toy, x, y, x0, y0)


def test_gap_estimate_deterministic_equals_squared_residual(toy):
    state = SolverState(x=np.array([0.3, 0.1]), y=np.array([0.2, -0.1]), rng=None)
    params = PenaltyParams(10.0, 1e-4)
    g = gap_displacements(toy, state.x, state.y, params, 1, np.random.default_rng(0))[0]
    for t in (1, 10, 1000):
        assert stationarity_gap_estimate(toy, state, params, t) == pytest.approx(g @ g, rel=1e-15)


def test_gap_estimate_small_at_optimum_for_large_rho(toy):
    rho = 1e4
    y = np.full(2, (10 + 18 * rho) / (16 + 32 * rho))
    state = SolverState(x=XS, y=y, rng=None)
    assert stationarity_gap_estimate(toy, state, PenaltyParams(rho, 0.0), 1000) <= 1e-4


def test_gap_estimate_variance_shrinks_with_samples():
    p = make_nonlinear(3, 1.0)
    state = SolverState(x=np.array([0.1, 0.2, -0.1]), y=np.array([0.3, 0.1, 0.2]), rng=None)
    params = PenaltyParams(5.0, 0.01)
    rng = np.random.default_rng(0)
    small = [stationarity_gap_estimate(p, state, params, 100, rng) for _ in range(50)]
    large = [stationarity_gap_estimate(p, state, params, 1000, rng) for _ in range(50)]
    ratio = np.var(small) / np.var(large)
    assert 5 <= ratio <= 20


def test_trace_csv_round_trip():
    rows = [TraceRow(0, 0.5, 1e-300, 3.0, 0.0, kkt_residual=0.1), TraceRow(1, 1 / 3, 2.0, 1.0, 1e-17, lambda_norm=0.0)]
    buf = io.StringIO()
    write_trace_csv(rows, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == ",".join(TRACE_COLUMNS)
    assert "\r" not in text
    back = read_trace_csv(io.StringIO(text))
    assert back == rows


def toy_state_after(toy, steps, schedule):
    tr = spaco_run(toy, schedule, (np.array([0.5, -0.5]), np.zeros(2)), StopCriteria(steps), DiagConfig(kkt=False))
    return tr.final_state


def test_merit_first_row_finite_and_positive(toy):
    sched = Schedule()
    state = toy_state_after(toy, 1, sched)
    v = merit_value(toy, state, params_at(sched, 2))
    assert np.isfinite(v) and v > 0


def test_merit_terms_nonnegative(toy):
    sched = Schedule()
    state = toy_state_after(toy, 20, sched)
    t = merit_terms(toy, state, params_at(sched, 21))
    assert min(t.tracking, t.grad_error, t.displacement) >= 0


def test_gradient_error_vanishes_with_exact_gradients_and_unit_momentum(toy):
    sched = Schedule(eta0=1.0, s=0.2, t=0.05)
    state = toy_state_after(toy, 1, sched)
    assert merit_terms(toy, state, params_at(sched, 2)).grad_error == 0.0


def test_merit_decreases_after_burn_in(toy):
    tr = spaco_run(toy, Schedule(), (np.array([0.5, -0.5]), np.zeros(2)), StopCriteria(3000),
                   DiagConfig(kkt=False, merit=True))
    v = np.array([r.merit_value for r in tr.rows[1:]])
    windows = v[: len(v) // 100 * 100].reshape(-1, 100).mean(axis=1)
    assert np.all(np.diff(windows[3:]) < 0)
    assert "phi_lower" in tr.header
