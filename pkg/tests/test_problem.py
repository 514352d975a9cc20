import dataclasses

import numpy as np
import pytest

from relaxed_pmp import (ControlBox, InputSchedule, Problem, RunningCostProblem, TimeGrid, augment_mayer,
                         builtin, eval_jacobian_x, forward_input)
from relaxed_pmp.problem import FieldEvaluationError, central_difference

ALL_BUILTINS = [
    ("toy_abs", {}),
    ("constrained_lqr", {}),
    ("quadrotor", {}),
    ("quadrotor", {"coupling": "rotational"}),
    ("quadrotor", {"target": (1.2, 1.0, 1.0), "gravity": True}),
]


def linear_problem(A, B, analytic=True):
    A, B = np.asarray(A, float), np.asarray(B, float)
    n, m = B.shape
    return Problem(
        n=n, m=m, horizon=1.0, initial_state=np.zeros(n),
        control_box=ControlBox(-np.ones(m), np.ones(m)),
        field=lambda t, x, u: A @ x + B @ u,
        terminal_cost=lambda x: float(x @ x),
        jacobian_x=(lambda t, x, u: A) if analytic else None,
    )


def test_control_box_validation():
    with pytest.raises(ValueError):
        ControlBox([1.0], [0.0])
    with pytest.raises(ValueError):
        ControlBox([], [])
    box = ControlBox([-1, 0], [1, 2])
    assert box.dim == 2
    assert box.contains([0.5, 2.0]) and not box.contains([0.5, 2.1])


def test_toy_field_at_zero():
    p = builtin("toy_abs")
    assert p.field_batch(0.0, np.zeros(1), np.zeros(1))[0, 0] == -1.0
    assert p.n == 1 and p.horizon == 1.0
    np.testing.assert_array_equal(p.control_box.lower, [-7.0])
    np.testing.assert_array_equal(p.control_box.upper, [7.0])


def test_lqr_field_input_gains():
    p = builtin("constrained_lqr")
    assert p.n == 7 and p.m == 2 and p.horizon == 2.0
    f = p.field_batch(0.0, np.zeros(7), np.array([1.0, 0.0]))[0]
    assert f[3] == pytest.approx(1 / 1.5)
    assert f[5] == pytest.approx(0.25 / 0.0475)
    assert f[4] == 0.0
    # running cost at the origin with zero input
    f0 = p.field_batch(0.0, np.zeros(7), np.zeros(2))[0]
    assert f0[6] == pytest.approx(0.3 ** 2 + 0.5 ** 2)


def test_lqr_state_matrix_as_printed():
    p = builtin("constrained_lqr")
    J = eval_jacobian_x(p, 0.0, np.zeros(7), np.zeros(2))
    assert J[3, 3] == pytest.approx(-0.2 / 1.5)
    assert J[3, 2] == pytest.approx(-0.51)
    assert J[4, 4] == pytest.approx(-0.2 / 1.5)
    assert J[5, 2] == pytest.approx(-1.5 * 9.8 * 0.05 / 0.0475)


def test_quadrotor_field_hover_thrust():
    p = builtin("quadrotor")
    assert p.n == 13 and p.m == 4 and p.horizon == 5.0
    f = p.field_batch(0.0, np.zeros(13), np.ones(4))[0]
    assert f[8] == pytest.approx(4 * 1.0 / 1.3)
    assert f[11] == 0.0
    assert f[6] == 0.0 and f[7] == 0.0
    # running cost: |c|^2 + eta * |u|_2
    assert f[12] == pytest.approx(1.2 ** 2 + 1 + 1 + 0.05 * 2.0)


def test_quadrotor_gravity_flag():
    off = builtin("quadrotor").field_batch(0.0, np.zeros(13), np.zeros(4))[0]
    on = builtin("quadrotor", {"gravity": True}).field_batch(0.0, np.zeros(13), np.zeros(4))[0]
    assert off[8] == 0.0
    assert on[8] == pytest.approx(-9.8)


def test_quadrotor_couplings_differ_only_in_pitch():
    x = np.linspace(0.1, 1.3, 13)
    u = np.array([0.3, 1.2, 0.7, 1.9])
    a = builtin("quadrotor").field_batch(0.0, x, u)[0]
    b = builtin("quadrotor", {"coupling": "rotational"}).field_batch(0.0, x, u)[0]
    diff = np.flatnonzero(a != b)
    assert diff.tolist() == [10]
    v4, v5, v6 = x[9], x[10], x[11]
    assert a[10] - b[10] == pytest.approx(v5 * v6 - v4 * v6)


def test_builtin_errors():
    with pytest.raises(KeyError):
        builtin("no_such_problem")
    with pytest.raises(KeyError):
        builtin("toy_abs", {"typo": 1})
    with pytest.raises(ValueError):
        builtin("quadrotor", {"coupling": "sideways"})


def test_linear_jacobian_is_exact():
    A = [[0.0, 1.0], [-2.0, -0.3]]
    p = linear_problem(A, [[0.0], [1.0]])
    np.testing.assert_array_equal(eval_jacobian_x(p, 0.3, np.array([1.0, 2.0]), np.array([0.5])), A)
    fd = eval_jacobian_x(linear_problem(A, [[0.0], [1.0]], analytic=False), 0.3, np.array([1.0, 2.0]), np.array([0.5]))
    np.testing.assert_allclose(fd, A, atol=1e-8)


def test_toy_jacobian_zero():
    p = builtin("toy_abs")
    for u in (-3.0, 0.0, 6.5):
        np.testing.assert_array_equal(eval_jacobian_x(p, 0.2, np.array([4.0]), np.array([u])), [[0.0]])


def test_quadrotor_fd_matches_analytic_at_hover():
    p = builtin("quadrotor")
    fd_only = dataclasses.replace(p, jacobian_x=None)
    x, u = np.zeros(13), np.ones(4)
    np.testing.assert_allclose(eval_jacobian_x(fd_only, 0.0, x, u), eval_jacobian_x(p, 0.0, x, u), atol=1e-6)


@pytest.mark.parametrize("name,overrides", ALL_BUILTINS)
def test_analytic_and_fd_jacobians_agree(name, overrides):
    p = builtin(name, overrides)
    fd_only = dataclasses.replace(p, jacobian_x=None)
    rng = np.random.default_rng(7)
    lo, hi = p.control_box.lower, p.control_box.upper
    for _ in range(100):
        x = rng.normal(size=p.n)
        x *= rng.uniform(0, 10) / np.linalg.norm(x)
        u = lo + rng.random(p.m) * (hi - lo)
        t = rng.uniform(0, p.horizon)
        np.testing.assert_allclose(eval_jacobian_x(fd_only, t, x, u), eval_jacobian_x(p, t, x, u), atol=1e-5)


@pytest.mark.parametrize("name,overrides", ALL_BUILTINS)
def test_terminal_gradient_matches_fd(name, overrides):
    p = builtin(name, overrides)
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.normal(scale=3.0, size=p.n)
        fd = central_difference(lambda z: np.atleast_1d(p.terminal_cost(z)), x)[0]
        np.testing.assert_allclose(p.grad_terminal(x), fd, rtol=1e-5, atol=1e-9)


@pytest.mark.filterwarnings("ignore:divide by zero")
def test_non_finite_field_reports_point():
    p = Problem(n=1, m=1, horizon=1.0, initial_state=[0.0], control_box=ControlBox([0.0], [1.0]),
                field=lambda t, x, u: np.array([np.log(u[0]) - np.inf * (u[0] == 0)]),
                terminal_cost=lambda x: float(x[0]))
    with pytest.raises(FieldEvaluationError, match="u="):
        eval_jacobian_x(p, 0.0, np.zeros(1), np.zeros(1))


def _simple_rc(running, terminal=None, horizon=2.0):
    return RunningCostProblem(
        n=1, m=1, horizon=horizon, initial_state=[0.5], control_box=ControlBox([-1.0], [1.0]),
        field=lambda t, x, u: np.array([-x[0] + u[0]]),
        running_cost=running, terminal_cost=terminal,
    )


def test_augment_zero_running_cost():
    psi = lambda x: float(x[0] ** 2)
    aug = augment_mayer(_simple_rc(lambda t, x, u: 0.0, psi))
    grid = TimeGrid(2.0, 40)
    traj = forward_input(aug, InputSchedule.constant([0.3], 2.0), grid)
    assert traj.final[1] == 0.0
    assert aug.terminal_cost(traj.final) == psi(traj.final[:1])


@pytest.mark.parametrize("u", [-1.0, 0.0, 0.7])
def test_augment_unit_running_cost_integrates_horizon(u):
    aug = augment_mayer(_simple_rc(lambda t, x, u: 1.0))
    traj = forward_input(aug, InputSchedule.constant([u], 2.0), TimeGrid(2.0, 10))
    assert aug.terminal_cost(traj.final) == pytest.approx(2.0, abs=1e-12)


def test_augment_requires_some_cost():
    with pytest.raises(ValueError):
        _simple_rc(None, None)


def test_augment_preserves_field_and_extends_jacobian():
    base = _simple_rc(lambda t, x, u: x[0] ** 2 + u[0], lambda x: float(x[0]))
    aug = augment_mayer(base)
    x, u = np.array([0.4, 9.0]), np.array([0.25])
    f = aug.field_batch(0.0, x, u)[0]
    assert f[0] == base.field(0.0, x[:1], u)[0]
    assert f[1] == pytest.approx(0.4 ** 2 + 0.25)
    J = eval_jacobian_x(aug, 0.0, x, u)
    np.testing.assert_allclose(J, [[-1.0, 0.0], [0.8, 0.0]], atol=1e-8)
    np.testing.assert_allclose(aug.grad_terminal(x), [1.0, 1.0], atol=1e-8)


def test_lqr_zero_input_running_cost():
    p = builtin("constrained_lqr")
    traj = forward_input(p, InputSchedule.constant([0.0, 0.0], 2.0), TimeGrid(2.0, 50))
    np.testing.assert_allclose(traj.final[:6], 0.0)
    assert traj.final[6] == pytest.approx(0.68, abs=1e-12)
