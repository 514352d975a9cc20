import numpy as np
import pytest

from relaxed_pmp import ControlBox, Problem
from relaxed_pmp.sampling import AtomSet

ACCEPTANCE = []


def scalar_problem(field, jac=None, psi=lambda x: float(x[0]), grad=None, horizon=1.0, x0=0.0,
                   box=(-1.0, 1.0)):
    """One-state, one-input problem from vectorized callables."""
    return Problem(n=1, m=1, horizon=horizon, initial_state=[x0], control_box=ControlBox([box[0]], [box[1]]),
                   field=field, terminal_cost=psi, jacobian_x=jac, terminal_gradient=grad, vectorized=True)


@pytest.fixture
def decay_problem():
    """xdot = -x + u, Psi = x(T)."""
    return scalar_problem(lambda t, x, u: -x[0] + u,
                          jac=lambda t, x, u: -np.ones(u.shape[:-1] + (1, 1)),
                          grad=lambda x: np.ones(1))


def atom_set(*values):
    return AtomSet(np.array(values, dtype=float)[:, None])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
