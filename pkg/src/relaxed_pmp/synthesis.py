"""Bang-bang input synthesis from a relaxed control: Haar averaging, then PWM.

Within each period of length ``delta`` the filtered weights become
consecutive pulses, one per atom in index order, each as wide as the
atom's time share.  The deterministic trajectory approaches the relaxed
one as ``delta`` shrinks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_control import RelaxedControl
from .integrate import forward_input, forward_relaxed
from .problem import Problem
from .sampling import AtomSet


@dataclass(frozen=True)
class InputSchedule:
    """Piecewise-constant input: segment ``j`` applies ``atoms[atom_index[j]]`` on ``[starts[j], ends[j])``."""

    starts: np.ndarray
    ends: np.ndarray
    atom_index: np.ndarray
    atoms: np.ndarray
    horizon: float

    def __post_init__(self):
        starts = np.asarray(self.starts, dtype=float).reshape(-1)
        ends = np.asarray(self.ends, dtype=float).reshape(-1)
        idx = np.asarray(self.atom_index, dtype=int).reshape(-1)
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        T = float(self.horizon)
        tol = 1e-12 * T
        if not (starts.size == ends.size == idx.size) or starts.size == 0:
            raise ValueError("schedule needs matching, non-empty segment arrays")
        if abs(starts[0]) > tol or abs(ends[-1] - T) > tol:
            raise ValueError(f"schedule must cover [0, {T}], got [{starts[0]}, {ends[-1]}]")
        if np.any(ends <= starts):
            raise ValueError("every segment needs positive width")
        jumps = starts[1:] - ends[:-1]
        if np.any(jumps > tol):
            raise ValueError(f"gap in schedule at t={ends[:-1][np.argmax(jumps)]}")
        if np.any(jumps < -tol):
            raise ValueError(f"overlap in schedule at t={starts[1:][np.argmin(jumps)]}")
        if np.any(idx < 0) or np.any(idx >= atoms.shape[0]):
            raise ValueError("atom index out of range")
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "ends", ends)
        object.__setattr__(self, "atom_index", idx)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "horizon", T)

    @classmethod
    def constant(cls, u, horizon: float) -> "InputSchedule":
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return cls([0.0], [horizon], [0], u[None, :], horizon)

    @property
    def segments(self):
        return list(zip(self.starts.tolist(), self.ends.tolist(), self.atom_index.tolist()))

    def segment_index(self, t: float) -> int:
        j = int(np.searchsorted(self.starts, t, side="right")) - 1
        return min(max(j, 0), self.starts.size - 1)

    def value_at(self, t: float) -> np.ndarray:
        return self.atoms[self.atom_index[self.segment_index(t)]]

    def sample(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        j = np.clip(np.searchsorted(self.starts, times, side="right") - 1, 0, self.starts.size - 1)
        return self.atoms[self.atom_index[j]]


def _period_ratio(rc: RelaxedControl, delta: float) -> int:
    dt = rc.grid.dt
    r = int(round(delta / dt))
    if r < 1 or abs(r * dt - delta) > 1e-9 * delta:
        raise ValueError(f"delta={delta} is not an integer multiple of dt={dt}")
    if rc.grid.intervals % r:
        raise ValueError(f"delta={delta} does not divide the horizon {rc.grid.horizon}")
    return r


def haar_filter(rc: RelaxedControl, delta: float) -> np.ndarray:
    """Average the weight rows over consecutive periods of length ``delta``.

    This is the Haar projection at that scale; rows stay in the simplex.
    """
    r = _period_ratio(rc, delta)
    K, N = rc.weights.shape
    return rc.weights.reshape(K // r, r, N).mean(axis=1)


def pwm(filtered: np.ndarray, atoms: AtomSet, delta: float, horizon: float = None) -> InputSchedule:
    """Turn per-period weights into consecutive pulses, atom-index order.

    Pulse ``i`` in period ``j`` lasts ``filtered[j, i] * delta``; atoms with
    zero weight get no pulse.  ``horizon`` pins the final switching time
    (defaults to ``len(filtered) * delta``).
    """
    filtered = np.asarray(filtered, dtype=float)
    n_periods = filtered.shape[0]
    if horizon is None:
        horizon = n_periods * delta
    starts, ends, idx = [], [], []
    for j, row in enumerate(filtered):
        t0 = j * delta
        t1 = horizon if j == n_periods - 1 else (j + 1) * delta
        edges = t0 + delta * np.cumsum(row)
        active = [i for i in range(row.size) if row[i] > 0.0]
        cursor = t0
        for pos, i in enumerate(active):
            end = t1 if pos == len(active) - 1 else min(edges[i], t1)
            if end > cursor:
                starts.append(cursor)
                ends.append(end)
                idx.append(i)
                cursor = end
    return InputSchedule(starts, ends, idx, atoms.atoms, horizon)


def synthesize(rc: RelaxedControl, delta: float) -> InputSchedule:
    return pwm(haar_filter(rc, delta), rc.atoms, delta, rc.grid.horizon)


def chattering_error(p: Problem, rc: RelaxedControl, schedule: InputSchedule, substeps: int = 1) -> float:
    """Max over grid nodes of ``|x_relaxed(t_k) - x_schedule(t_k)|_2``."""
    xr = forward_relaxed(p, rc, substeps, dense=False).states
    xu = forward_input(p, schedule, rc.grid, substeps=substeps, dense=False).states
    return float(np.max(np.linalg.norm(xr - xu, axis=1)))
