"""Empirical relaxed controls as simplex-valued weights on a uniform time grid."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .sampling import AtomSet

NEG_TOL = 1e-12
SUM_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k T / K``, ``k = 0..K``."""

    horizon: float
    intervals: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if int(self.intervals) != self.intervals or self.intervals < 1:
            raise ValueError("intervals must be a positive integer")
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "intervals", int(self.intervals))

    @property
    def dt(self) -> float:
        return self.horizon / self.intervals

    @cached_property
    def nodes(self) -> np.ndarray:
        nodes = np.linspace(0.0, self.horizon, self.intervals + 1)
        nodes.setflags(write=False)
        return nodes

    def index(self, t: float) -> int:
        """Interval containing ``t``: right-continuous, last interval closed."""
        if t < 0 or t > self.horizon:
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        k = int(np.searchsorted(self.nodes, t, side="right")) - 1
        return min(max(k, 0), self.intervals - 1)


def normalize_rows(W: np.ndarray) -> np.ndarray:
    """Clamp negative round-off to zero and rescale each row to sum to one."""
    W = np.where(W < 0.0, 0.0, W)
    sums = W.sum(axis=1, keepdims=True)
    if np.any(sums <= 0.0):
        raise ValueError("weight row with no mass")
    return W / sums


@dataclass(frozen=True)
class RelaxedControl:
    """Piecewise-constant weights: row ``k`` holds the mixture on ``[t_k, t_{k+1})``."""

    grid: TimeGrid
    atoms: AtomSet
    weights: np.ndarray

    def __post_init__(self):
        W = np.array(self.weights, dtype=float)
        if W.shape != (self.grid.intervals, self.atoms.count):
            raise ValueError(f"weights have shape {W.shape}, expected {(self.grid.intervals, self.atoms.count)}")
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)

    def check_simplex(self, neg_tol: float = NEG_TOL, sum_tol: float = SUM_TOL) -> bool:
        W = self.weights
        return bool(np.all(W >= -neg_tol) and np.all(np.abs(W.sum(axis=1) - 1.0) <= sum_tol))


@dataclass(frozen=True)
class DescentDirection:
    """Signed weight perturbation with the optimality values it achieves.

    ``theta_pure`` is the unregularized optimality function; ``theta_reg``
    is the Hamiltonian change ``sum_k dt sum_i dW[k, i] H[k, i]`` produced
    by ``delta_weights`` (equal to ``theta_pure`` when no l1 penalty is used).
    """

    delta_weights: np.ndarray
    theta_pure: float
    theta_reg: float


def new_uniform(grid: TimeGrid, atoms: AtomSet) -> RelaxedControl:
    """Every atom gets weight ``1/N`` on every interval."""
    N = atoms.count
    return RelaxedControl(grid, atoms, np.full((grid.intervals, N), 1.0 / N))


def apply_step(rc: RelaxedControl, d: DescentDirection, step: float) -> RelaxedControl:
    """``W + step * dW``, clamped and renormalized row-wise."""
    if not 0.0 <= step <= 1.0:
        raise ValueError(f"step {step} outside [0, 1]")
    dW = np.asarray(d.delta_weights, dtype=float)
    if dW.shape != rc.weights.shape:
        raise ValueError(f"direction shape {dW.shape} does not match weights {rc.weights.shape}")
    if step == 0.0:
        return rc
    return RelaxedControl(rc.grid, rc.atoms, normalize_rows(rc.weights + step * dW))


def weights_at(rc: RelaxedControl, t: float) -> np.ndarray:
    return rc.weights[rc.grid.index(t)]
