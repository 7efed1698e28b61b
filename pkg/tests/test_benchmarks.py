import numpy as np
import pytest

from spaco import BasinClass, basin_errors, classify_basin, kkt_residual, make_linear, make_nonlinear, make_toy2d
from spaco.benchmarks import make_problem, toy2d_phi

E2 = np.ones(2)


def test_toy2d_reference_solution():
    ref = make_toy2d().reference
    np.testing.assert_array_equal(ref.x_star, -0.75 * E2)
    np.testing.assert_allclose(ref.y_star_of(ref.x_star), 9 / 16 * E2, atol=1e-15)
    np.testing.assert_array_equal(ref.lambda_star, [1 / 16])
    assert [p.label for p in ref.spurious_points] == ["spurious"]


def test_toy2d_constraint_active_at_solution(toy):
    ref = toy.reference
    assert toy.c_value(ref.x_star, ref.y_star)[0] == pytest.approx(0.0, abs=1e-15)


def test_toy2d_value_function_forms_agree(toy):
    assert toy2d_phi(np.zeros(2)) == 0.0
    xs = -0.75 * E2
    assert toy2d_phi(xs) == pytest.approx(9 / 64 + (-3 / 8) * (9 / 8 + 3 / 8), abs=1e-15)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = toy.set_x.sample(rng)
        y = toy.reference.y_star_of(x)
        assert toy2d_phi(x) == pytest.approx(toy.f_value(x, y), abs=1e-12)


def test_constrained_inner_maximizer_beats_grid_search(toy):
    # brute-force maximum over feasible y near the closed form, resolution 1e-3
    rng = np.random.default_rng(5)
    g = np.arange(-0.5, 0.5 + 1e-12, 1e-3)
    for _ in range(3):
        x = toy.set_x.sample(rng)
        ys = toy.reference.y_star_of(x)
        y1, y2 = np.meshgrid(ys[0] + g, ys[1] + g, indexing="ij")
        q = x @ x
        vals = (0.5 * q - 1) ** 2 - 0.5 * ((y1 - 1) ** 2 + (y2 - 1) ** 2) + 0.5 * (x[0] * y1 + x[1] * y2)
        vals[y1 + y2 - q > 0] = -np.inf
        i = np.unravel_index(np.argmax(vals), vals.shape)
        best = np.array([y1[i], y2[i]])
        assert np.max(np.abs(best - ys)) <= 1e-3
        assert toy.f_value(x, ys) >= vals[i] - 1e-12


def test_nonlinear_at_n2_matches_toy2d():
    toy, nl = make_toy2d(), make_nonlinear(2, 0.0)
    rng = np.random.default_rng(1)
    for _ in range(10):
        x, y = toy.set_x.sample(rng), toy.set_y.sample(rng)
        assert nl.f_value(x, y) == pytest.approx(toy.f_value(x, y), rel=1e-14, abs=1e-14)


@pytest.mark.parametrize("n", [1, 3, 50])
def test_nonlinear_reference(n):
    ref = make_nonlinear(n).reference
    np.testing.assert_allclose(ref.y_star_of(ref.x_star), np.full(n, 9 / 16), atol=1e-14)


def test_nonlinear_zero_noise_gradient():
    p = make_nonlinear(4, 0.0)
    assert p.is_deterministic
    assert p.draw_noise(np.random.default_rng(0)) is None


def test_linear_reference_satisfies_constraint_and_inner_optimality():
    p = make_linear(6, 1.0, seed=4)
    ref = p.reference
    assert p.c_value(ref.x_star, ref.y_star)[0] == pytest.approx(0.0, abs=1e-12)
    rng = np.random.default_rng(2)
    for _ in range(5):
        x = rng.uniform(-1, 1, 6)
        ys = ref.y_star_of(x)
        assert p.c_value(x, ys)[0] == pytest.approx(0.0, abs=1e-12)
        # stationarity of f - lam * c in y with the reference multiplier
        _, gy = p.grad_f(x, ys)
        _, jy = p.c_jacobians(x, ys)
        np.testing.assert_allclose(gy - jy.T @ ref.lambda_star, 0.0, atol=1e-13)


def test_linear_scalar_case_matches_direct_inversion():
    p = make_linear(1, 0.0, seed=9)
    a = float(p.metadata["a_bar"][0, 0])
    assert p.reference.x_star[0] == pytest.approx(-2.0 / (a + 1.0), rel=1e-15)


def test_problem_data_identical_for_same_seed():
    a, b = make_linear(5, 1.0, seed=7), make_linear(5, 1.0, seed=7)
    np.testing.assert_array_equal(a.metadata["a_bar"], b.metadata["a_bar"])
    np.testing.assert_array_equal(a.reference.x_star, b.reference.x_star)
    assert not np.array_equal(a.metadata["a_bar"], make_linear(5, 1.0, seed=8).metadata["a_bar"])


@pytest.mark.parametrize("problem", [make_toy2d(), make_nonlinear(5), make_linear(5, 1.0, 0)], ids=lambda p: p.name)
def test_kkt_zero_at_registered_points_and_positive_nearby(problem):
    rng = np.random.default_rng(3)
    for pt in problem.reference.stationary_points:
        assert kkt_residual(problem, pt.x, pt.y, pt.lam) <= 1e-9
        for _ in range(100):
            dx = rng.standard_normal(problem.dim_x)
            dy = rng.standard_normal(problem.dim_y)
            scale = 0.05 / np.linalg.norm(np.concatenate([dx, dy]))
            x = problem.set_x.project(pt.x + scale * dx)
            y = problem.set_y.project(pt.y + scale * dy)
            assert kkt_residual(problem, x, y, pt.lam) >= 1e-6


def test_classify_basin_cases(toy):
    ref = toy.reference
    assert classify_basin(toy, ref.x_star, ref.y_star) is BasinClass.TRUE_SOLUTION
    assert classify_basin(toy, np.zeros(2), np.zeros(2)) is BasinClass.SPURIOUS
    mid_x, mid_y = 0.5 * ref.x_star, 0.5 * ref.y_star
    assert classify_basin(toy, mid_x, mid_y, radius=0.1) is BasinClass.NEITHER


def test_basin_classes_are_mutually_exclusive(toy):
    e_opt, e_spur = basin_errors(toy, np.zeros(2), np.zeros(2))
    assert e_opt == pytest.approx(np.linalg.norm(-0.75 * E2))
    assert e_opt > 0.2 and e_spur == 0.0
    with pytest.raises(ValueError, match="too large"):
        classify_basin(toy, np.zeros(2), np.zeros(2), radius=2.0)


def test_classify_requires_spurious_points():
    with pytest.raises(ValueError, match="no registered spurious"):
        classify_basin(make_linear(2), np.zeros(2), np.zeros(4))


def test_make_problem_dispatch():
    assert make_problem("toy2d").name == "toy2d"
    assert make_problem("linear", 3).dim_y == 6
    with pytest.raises(ValueError, match="unknown problem"):
        make_problem("quartic")
