import sys

import numpy as np
import pytest

from spaco import BoxSet, ConstrainedMinimaxProblem, ConstraintKind, make_linear, make_nonlinear, make_toy2d


@pytest.fixture
def toy():
    return make_toy2d()


@pytest.fixture
def small_problems():
    return [make_toy2d(), make_nonlinear(4, 1.0), make_linear(4, 1.0, seed=3)]


def quadratic_problem(center, sigma_box=10.0):
    """f = -|y - center|^2 / 2 with a constraint that is never active."""
    center = np.asarray(center, dtype=float)
    m = center.size
    return ConstrainedMinimaxProblem(
        name="quadratic",
        set_x=BoxSet.cube(-1, 1, 1),
        set_y=BoxSet.cube(-sigma_box, sigma_box, m),
        f_value=lambda x, y: float(-0.5 * (y - center) @ (y - center)),
        grad_f=lambda x, y: (np.zeros(1), center - y),
        c_value=lambda x, y: np.array([-1.0]),
        c_jacobians=lambda x, y: (np.zeros((1, 1)), np.zeros((1, m))),
        constraint_kinds=(ConstraintKind.INEQUALITY,),
    )


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.LINES):
            terminalreporter.write_line(line)
