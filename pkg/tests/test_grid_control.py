import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from relaxed_pmp import DescentDirection, TimeGrid, apply_step, new_uniform, weights_at
from relaxed_pmp.grid_control import RelaxedControl
from relaxed_pmp.sampling import AtomSet


def atoms(n):
    return AtomSet(np.arange(n, dtype=float)[:, None])


def test_time_grid():
    g = TimeGrid(2.0, 8)
    assert g.dt == 0.25
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 2.0 and len(g.nodes) == 9
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 4)


def test_uniform_single_atom():
    rc = new_uniform(TimeGrid(1.0, 5), atoms(1))
    np.testing.assert_array_equal(rc.weights, np.ones((5, 1)))


def test_uniform_four_atoms():
    rc = new_uniform(TimeGrid(1.0, 2), atoms(4))
    np.testing.assert_array_equal(rc.weights, np.full((2, 4), 0.25))


@pytest.mark.parametrize("n", [1, 3, 7, 81, 625])
def test_uniform_rows_sum_to_one(n):
    rc = new_uniform(TimeGrid(1.0, 3), atoms(n))
    np.testing.assert_allclose(rc.weights.sum(axis=1), 1.0, atol=1e-12)
    assert rc.check_simplex()


def test_zero_step_is_identity():
    rc = RelaxedControl(TimeGrid(1.0, 1), atoms(2), [[0.3, 0.7]])
    d = DescentDirection(np.array([[-0.3, 0.3]]), -1.0, -1.0)
    assert apply_step(rc, d, 0.0).weights.tobytes() == rc.weights.tobytes()


def test_full_mass_transfer():
    rc = RelaxedControl(TimeGrid(1.0, 1), atoms(2), [[0.3, 0.7]])
    d = DescentDirection(np.array([[-0.3, 0.3]]), -1.0, -1.0)
    np.testing.assert_array_equal(apply_step(rc, d, 1.0).weights, [[0.0, 1.0]])


def test_apply_step_errors():
    rc = new_uniform(TimeGrid(1.0, 2), atoms(3))
    with pytest.raises(ValueError):
        apply_step(rc, DescentDirection(np.zeros((2, 2)), 0.0, 0.0), 0.5)
    with pytest.raises(ValueError):
        apply_step(rc, DescentDirection(np.zeros((2, 3)), 0.0, 0.0), 1.5)


def random_pair(rng, K, N):
    """Random simplex rows and a feasible direction (W' - W with W' in the simplex)."""
    W = rng.dirichlet(np.ones(N) * 0.5, size=K)
    target = rng.dirichlet(np.ones(N) * 0.5, size=K)
    return W, target - W


def test_simplex_preserved_random_draws():
    rng = np.random.default_rng(0)
    grid = TimeGrid(1.0, 4)
    for _ in range(1000):
        N = int(rng.integers(1, 9))
        W, dW = random_pair(rng, 4, N)
        rc = RelaxedControl(grid, atoms(N), W)
        out = apply_step(rc, DescentDirection(dW, -1.0, -1.0), 0.37)
        assert np.all(out.weights >= 0.0)
        np.testing.assert_allclose(out.weights.sum(axis=1), 1.0, atol=1e-12)
        assert out.atoms is rc.atoms and out.grid is rc.grid


@settings(max_examples=300)
@given(st.integers(1, 6), st.floats(0.0, 1.0), st.integers(0, 2 ** 32 - 1))
def test_simplex_invariant_any_step(N, step, seed):
    rng = np.random.default_rng(seed)
    W, dW = random_pair(rng, 3, N)
    rc = RelaxedControl(TimeGrid(1.0, 3), atoms(N), W)
    out = apply_step(rc, DescentDirection(dW, -1.0, -1.0), step)
    assert out.check_simplex(neg_tol=0.0, sum_tol=1e-12)


@given(st.floats(0.0, 1.0), st.integers(0, 2 ** 32 - 1))
def test_zero_step_after_step_is_idempotent(step, seed):
    rng = np.random.default_rng(seed)
    W, dW = random_pair(rng, 2, 4)
    rc = RelaxedControl(TimeGrid(1.0, 2), atoms(4), W)
    d = DescentDirection(dW, -1.0, -1.0)
    once = apply_step(rc, d, step)
    assert apply_step(once, d, 0.0).weights.tobytes() == once.weights.tobytes()


def test_weights_at_boundaries():
    grid = TimeGrid(1.0, 4)
    W = np.eye(4)
    rc = RelaxedControl(grid, atoms(4), W)
    np.testing.assert_array_equal(weights_at(rc, 0.0), W[0])
    np.testing.assert_array_equal(weights_at(rc, 1.0), W[3])
    for k in range(4):
        np.testing.assert_array_equal(weights_at(rc, grid.nodes[k]), W[k])
    np.testing.assert_array_equal(weights_at(rc, 0.3), W[1])
    with pytest.raises(ValueError):
        weights_at(rc, 1.0 + 1e-9)
    with pytest.raises(ValueError):
        weights_at(rc, -0.1)


def test_weight_shape_checked():
    with pytest.raises(ValueError):
        RelaxedControl(TimeGrid(1.0, 2), atoms(3), np.ones((2, 2)) / 2)
