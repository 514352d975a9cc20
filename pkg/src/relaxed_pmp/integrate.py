"""Fixed-step RK4 for relaxed dynamics, the relaxed costate, and switched inputs.

Both forward integrators reduce to the same piecewise core: a list of
time pieces, each carrying a finite mixture ``sum_i w_i f(t, x, u_i)``.
A relaxed control gives one piece per grid interval; a deterministic
input schedule gives pieces cut at every grid node and switching time,
each with a point mass.  Sharing the core is what makes a point-mass
relaxed control and the equivalent schedule produce identical bits.

Intermediate states inside a piece (needed by the backward costate and
by Simpson quadrature of the Hamiltonian) come from cubic Hermite
interpolation of the node states and slopes.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil
from typing import TYPE_CHECKING, List, Optional

import numpy as np

from .grid_control import RelaxedControl, TimeGrid
from .problem import FieldEvaluationError, Problem, central_difference

if TYPE_CHECKING:  # pragma: no cover
    from .synthesis import InputSchedule

BLOWUP = 1e9


class IntegrationError(RuntimeError):
    """State or costate left the finite region during integration."""


@dataclass(frozen=True)
class Piece:
    start: float
    end: float
    steps: int
    atoms: np.ndarray  # (Na, m), active atoms only
    weights: np.ndarray  # (Na,)


@dataclass(frozen=True)
class Trajectory:
    """States at the grid nodes, plus the piecewise data that produced them."""

    grid: TimeGrid
    states: np.ndarray
    knots: np.ndarray
    knot_states: np.ndarray
    slopes: Optional[np.ndarray]
    pieces: List[Piece]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def state_at(self, t: float) -> np.ndarray:
        return _interpolate(self.knots, self.knot_states, self.slopes, t)


@dataclass(frozen=True)
class Costate:
    """Adjoint values at the grid nodes (``values[K] = grad Psi(x(T))``)."""

    grid: TimeGrid
    values: np.ndarray
    knots: np.ndarray
    knot_values: np.ndarray
    slopes: np.ndarray

    def value_at(self, t: float) -> np.ndarray:
        return _interpolate(self.knots, self.knot_values, self.slopes, t)


def hermite(x0, x1, s0, s1, h, theta):
    """Cubic Hermite interpolant on a piece of length ``h`` at ``theta in [0, 1]``."""
    th2 = theta * theta
    th3 = th2 * theta
    return ((2 * th3 - 3 * th2 + 1) * x0 + (th3 - 2 * th2 + theta) * h * s0
            + (-2 * th3 + 3 * th2) * x1 + (th3 - th2) * h * s1)


def _interpolate(knots, values, slopes, t):
    j = int(np.searchsorted(knots, t, side="right")) - 1
    j = min(max(j, 0), len(knots) - 2)
    a, b = knots[j], knots[j + 1]
    if slopes is None:
        theta = (t - a) / (b - a)
        return (1 - theta) * values[j] + theta * values[j + 1]
    return hermite(values[j], values[j + 1], slopes[j, 0], slopes[j, 1], b - a, (t - a) / (b - a))


def _rk4(fun, t, y, h):
    k1 = fun(t, y)
    k2 = fun(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = fun(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = fun(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), k1


def mixed_field(problem: Problem, atoms: np.ndarray, weights: np.ndarray):
    def fun(t, x):
        return weights @ problem.field_batch(t, x, atoms)
    return fun


def mixed_jacobian(problem: Problem, atoms: np.ndarray, weights: np.ndarray):
    """``sum_i w_i df/dx(t, x, u_i)``; finite differences of the mixture if no analytic Jacobian."""
    if problem.jacobian_x is not None:
        def jac(t, x):
            return np.tensordot(weights, problem.jacobian_batch(t, x, atoms), axes=1)
    else:
        f = mixed_field(problem, atoms, weights)

        def jac(t, x):
            return central_difference(lambda z: f(t, z), x)
    return jac


def _check_state(y, t, what):
    if not np.all(np.isfinite(y)) or np.linalg.norm(y) > BLOWUP:
        raise IntegrationError(f"{what} blew up at t={t:.17g}: {y}")


def _forward_pieces(problem: Problem, x0: np.ndarray, pieces: List[Piece], dense: bool):
    P = len(pieces)
    states = np.empty((P + 1, problem.n))
    states[0] = x0
    slopes = np.empty((P, 2, problem.n)) if dense else None
    x = x0
    for j, pc in enumerate(pieces):
        fun = mixed_field(problem, pc.atoms, pc.weights)
        h = (pc.end - pc.start) / pc.steps
        for s in range(pc.steps):
            t = pc.start + s * h
            try:
                x, k1 = _rk4(fun, t, x, h)
            except FieldEvaluationError as exc:
                raise IntegrationError(f"state diverged in piece starting at t={pc.start:.17g}: {exc}") from exc
            if dense and s == 0:
                slopes[j, 0] = k1
            _check_state(x, pc.end if s == pc.steps - 1 else t + h, "state")
        states[j + 1] = x
        if dense:
            slopes[j, 1] = fun(pc.end, x)
    return states, slopes


def relaxed_pieces(rc: RelaxedControl, substeps: int = 1) -> List[Piece]:
    nodes = rc.grid.nodes
    A = rc.atoms.atoms
    pieces = []
    for k, row in enumerate(rc.weights):
        active = np.flatnonzero(row > 0.0)
        pieces.append(Piece(nodes[k], nodes[k + 1], substeps, A[active], row[active]))
    return pieces


def forward_relaxed(p: Problem, rc: RelaxedControl, substeps: int = 1, dense: bool = True) -> Trajectory:
    """Integrate ``xdot = sum_i w_i(t) f(t, x, u_i)`` with classical RK4.

    ``substeps`` RK4 steps are taken per grid interval.  ``dense=False``
    skips the end-of-interval slopes (enough when only ``x(T)`` is needed).
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    pieces = relaxed_pieces(rc, substeps)
    states, slopes = _forward_pieces(p, p.initial_state, pieces, dense)
    return Trajectory(rc.grid, states, rc.grid.nodes, states, slopes, pieces)


def _backward_pieces(problem: Problem, pT: np.ndarray, traj: Trajectory):
    if traj.slopes is None:
        raise ValueError("costate needs a dense trajectory")
    pieces = traj.pieces
    P = len(pieces)
    values = np.empty((P + 1, problem.n))
    values[P] = pT
    slopes = np.empty((P, 2, problem.n))
    p = pT
    for j in range(P - 1, -1, -1):
        pc = pieces[j]
        jac = mixed_jacobian(problem, pc.atoms, pc.weights)
        x0, x1 = traj.knot_states[j], traj.knot_states[j + 1]
        s0, s1 = traj.slopes[j]
        span = pc.end - pc.start

        def rhs(t, y, pc=pc, x0=x0, x1=x1, s0=s0, s1=s1, span=span, jac=jac):
            x = hermite(x0, x1, s0, s1, span, (t - pc.start) / span)
            return -jac(t, x).T @ y

        h = span / pc.steps
        for s in range(pc.steps):
            t = pc.end - s * h
            try:
                p, k1 = _rk4(rhs, t, p, -h)
            except FieldEvaluationError as exc:
                raise IntegrationError(f"costate diverged in piece ending at t={pc.end:.17g}: {exc}") from exc
            if s == 0:
                slopes[j, 1] = k1
            _check_state(p, t - h, "costate")
        values[j] = p
        slopes[j, 0] = rhs(pc.start, p)
    return values, slopes


def backward_costate(p: Problem, rc: Optional[RelaxedControl], traj: Trajectory) -> Costate:
    """Integrate ``pdot = -(sum_i w_i df/dx(t, x, u_i))^T p`` backward from ``grad Psi(x(T))``.

    The mixture on each piece is taken from ``traj`` (which records the
    control it was simulated with); ``rc`` is accepted for symmetry with
    the forward pass and only checked for consistency.
    """
    if rc is not None and rc.grid != traj.grid:
        raise ValueError("trajectory and control live on different grids")
    pT = p.grad_terminal(traj.final)
    values, slopes = _backward_pieces(p, pT, traj)
    node_values = values[_node_positions(traj)]
    return Costate(traj.grid, node_values, traj.knots, values, slopes)


def _node_positions(traj: Trajectory) -> np.ndarray:
    if len(traj.knots) == traj.grid.intervals + 1:
        return np.arange(traj.grid.intervals + 1)
    return np.searchsorted(traj.knots, traj.grid.nodes)


def schedule_pieces(schedule: "InputSchedule", grid: TimeGrid, substeps: int = 1) -> List[Piece]:
    """Cut ``[0, T]`` at grid nodes and switching times; one point mass per piece."""
    if abs(schedule.horizon - grid.horizon) > 1e-12 * grid.horizon:
        raise ValueError("schedule and grid have different horizons")
    nodes = grid.nodes
    dt = grid.dt
    cuts = [nodes]
    for b in schedule.starts[1:]:
        k = int(round(b / dt))
        if 0 <= k <= grid.intervals and abs(b - nodes[k]) <= 1e-9 * dt:
            continue
        cuts.append(np.array([b]))
    bps = np.unique(np.concatenate(cuts))
    keep = [0]
    for i in range(1, len(bps)):
        if bps[i] - bps[keep[-1]] > 1e-12 * grid.horizon:
            keep.append(i)
    if keep[-1] != len(bps) - 1:
        keep[-1] = len(bps) - 1
    bps = bps[keep]
    pieces = []
    one = np.ones(1)
    for a, b in zip(bps[:-1], bps[1:]):
        seg = schedule.segment_index(0.5 * (a + b))
        steps = max(1, ceil(substeps * (b - a) / dt * (1 - 1e-9)))
        atom = schedule.atoms[schedule.atom_index[seg]][None, :]
        pieces.append(Piece(a, b, steps, atom, one))
    return pieces


def forward_input(p: Problem, schedule: "InputSchedule", grid: TimeGrid, x0=None,
                  substeps: int = 1, dense: bool = True) -> Trajectory:
    """Simulate a piecewise-constant input, never stepping across a switch.

    States are reported on ``grid``; switching times inside an interval
    add internal pieces.
    """
    x0 = p.initial_state if x0 is None else np.asarray(x0, dtype=float)
    pieces = schedule_pieces(schedule, grid, substeps)
    knots = np.array([pc.start for pc in pieces] + [pieces[-1].end])
    states, slopes = _forward_pieces(p, x0, pieces, dense)
    node_states = states[np.searchsorted(knots, grid.nodes)]
    return Trajectory(grid, node_states, knots, states, slopes, pieces)
