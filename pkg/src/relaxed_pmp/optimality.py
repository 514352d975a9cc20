"""Sampled Hamiltonian, optimality function, descent direction and Pontryagin gap."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_control import DescentDirection, RelaxedControl, TimeGrid
from .integrate import Costate, Trajectory, backward_costate, forward_input
from .problem import Problem
from .sampling import AtomSet


@dataclass(frozen=True)
class HamiltonianTable:
    """``values[k, i]``: Hamiltonian of atom ``i`` on interval ``k``."""

    values: np.ndarray
    rule: str = "simpson"


def hamiltonian_table(p: Problem, rc: RelaxedControl, traj: Trajectory, costate: Costate,
                      rule: str = "simpson") -> HamiltonianTable:
    """Tabulate ``p(t)^T f(t, x(t), u_i)`` per interval and atom.

    ``rule="left"`` evaluates at the interval's left node.
    ``rule="simpson"`` (the default) averages the integrand over the
    interval with Simpson's rule, using Hermite-interpolated state and
    costate at the midpoint.  With Simpson the table reproduces the
    first-order change of ``Psi(x(T))`` to the integrator's order, which
    keeps the optimality value consistent with the line search.
    """
    grid = rc.grid
    nodes = grid.nodes
    atoms = rc.atoms.atoms
    X, P = traj.states, costate.values

    def row(t, x, lam):
        return p.field_batch(t, x, atoms) @ lam

    if rule == "left":
        H = np.array([row(nodes[k], X[k], P[k]) for k in range(grid.intervals)])
    elif rule == "simpson":
        at_nodes = np.array([row(nodes[k], X[k], P[k]) for k in range(grid.intervals + 1)])
        mids = np.empty((grid.intervals, atoms.shape[0]))
        for k in range(grid.intervals):
            tm = 0.5 * (nodes[k] + nodes[k + 1])
            mids[k] = row(tm, traj.state_at(tm), costate.value_at(tm))
        H = (at_nodes[:-1] + 4.0 * mids + at_nodes[1:]) / 6.0
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    if not np.all(np.isfinite(H)):
        raise FloatingPointError("non-finite Hamiltonian entry")
    return HamiltonianTable(H, rule)


def theta_and_direction(H, W: np.ndarray, dt: float, gamma: float = 0.0) -> DescentDirection:
    """Solve the pointwise linear program over mass transfers.

    Each row minimizes ``sum_i dw_i H_i + gamma * sum_i |dw_i|`` subject
    to ``w + dw >= 0`` and ``sum_i dw_i = 0``.  Without the penalty all
    mass goes to the row's argmin atom (lowest index on ties); with it,
    only atoms whose Hamiltonian exceeds the minimum by more than
    ``2 * gamma`` give up their weight.
    """
    H = np.asarray(getattr(H, "values", H), dtype=float)
    W = np.asarray(W, dtype=float)
    if H.shape != W.shape:
        raise ValueError(f"table shape {H.shape} does not match weights {W.shape}")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    rows = np.arange(H.shape[0])
    best = np.argmin(H, axis=1)
    h_min = H[rows, best]
    gain = h_min[:, None] - H  # <= 0

    theta_pure = float(dt * np.sum(W * gain))

    move = (-gain > 2.0 * gamma) if gamma > 0 else np.ones_like(W, dtype=bool)
    move[rows, best] = False
    dW = np.where(move, -W, 0.0)
    dW[rows, best] = -dW.sum(axis=1)
    theta_reg = float(dt * np.sum(np.where(move, W * gain, 0.0)))
    return DescentDirection(dW, theta_pure, theta_reg)


def directional_derivative(H, delta_weights: np.ndarray, dt: float) -> float:
    """First-order change of ``Psi(x(T))`` along ``delta_weights``: ``dt * sum dW * H``."""
    H = np.asarray(getattr(H, "values", H), dtype=float)
    return float(dt * np.sum(np.asarray(delta_weights) * H))


@dataclass(frozen=True)
class GapProfile:
    """Per-interval Pontryagin gap ``min_i H(u_i) - H(u(t_k))`` and its minimizing atom."""

    times: np.ndarray
    gaps: np.ndarray
    best_atom: np.ndarray
    dt: float

    @property
    def total(self) -> float:
        return float(self.dt * np.sum(self.gaps))


def gap_profile(p: Problem, schedule, atoms: AtomSet, intervals: int = 100, substeps: int = 1) -> GapProfile:
    grid = TimeGrid(p.horizon, intervals)
    traj = forward_input(p, schedule, grid, substeps=substeps)
    costate = backward_costate(p, None, traj)
    nodes = grid.nodes[:-1]
    gaps = np.empty(intervals)
    best = np.empty(intervals, dtype=int)
    for k, t in enumerate(nodes):
        x, lam = traj.states[k], costate.values[k]
        h_atoms = p.field_batch(t, x, atoms.atoms) @ lam
        h_input = p.field_batch(t, x, schedule.value_at(t)) @ lam
        best[k] = int(np.argmin(h_atoms))
        gaps[k] = min(h_atoms[best[k]] - h_input[0], 0.0)
    return GapProfile(nodes, gaps, best, grid.dt)


def pontryagin_gap(p: Problem, schedule, atoms: AtomSet, intervals: int = 100, substeps: int = 1) -> float:
    """Integrated Hamiltonian gap of a deterministic input (non-positive).

    Zero means no atom lowers the Hamiltonian anywhere along the input's
    own trajectory and costate, i.e. a Minimum Principle point at atom
    resolution.
    """
    return gap_profile(p, schedule, atoms, intervals, substeps).total
