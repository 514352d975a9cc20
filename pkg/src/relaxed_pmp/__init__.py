"""Pontryagin-optimal inputs from sampled relaxed controls.

Typical use::

    from relaxed_pmp import builtin, sample_grid, solve, SolverConfig, synthesize

    prob = builtin("toy_abs")
    atoms = sample_grid(prob.control_box, [15])
    rc, log = solve(prob, atoms, SolverConfig(grid_intervals=50))
    schedule = synthesize(rc, delta=4 * rc.grid.dt)
"""

from .descent import IterationLog, SolverConfig, armijo, solve
from .grid_control import DescentDirection, RelaxedControl, TimeGrid, apply_step, new_uniform, weights_at
from .integrate import Costate, IntegrationError, Trajectory, backward_costate, forward_input, forward_relaxed
from .optimality import (HamiltonianTable, directional_derivative, gap_profile, hamiltonian_table,
                         pontryagin_gap, theta_and_direction)
from .problem import (ControlBox, FieldEvaluationError, Problem, RunningCostProblem, augment_mayer, builtin,
                      eval_jacobian_x)
from .sampling import AtomSet, hull_points, sample_grid, sample_uniform
from .synthesis import InputSchedule, chattering_error, haar_filter, pwm, synthesize

__version__ = "0.1.0"
