"""Armijo step selection and the outer descent loop on sampled relaxed controls."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .grid_control import DescentDirection, RelaxedControl, TimeGrid, apply_step, new_uniform
from .integrate import IntegrationError, Trajectory, backward_costate, forward_relaxed
from .optimality import hamiltonian_table, theta_and_direction
from .problem import Problem
from .sampling import AtomSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    eps_tol: float = 1e-5
    alpha: float = 0.1
    beta: float = 0.5
    gamma_l1: float = 0.0
    max_iters: int = 500
    armijo_kmax: int = 30
    grid_intervals: int = 100
    substeps: int = 1

    def __post_init__(self):
        if not self.eps_tol > 0:
            raise ValueError("eps_tol must be positive")
        if not 0 < self.alpha < 1 or not 0 < self.beta < 1:
            raise ValueError("alpha and beta must lie in (0, 1)")
        if self.gamma_l1 < 0:
            raise ValueError("gamma_l1 must be non-negative")
        if self.max_iters < 0 or self.armijo_kmax < 0:
            raise ValueError("iteration limits must be non-negative")
        if self.grid_intervals < 1 or self.substeps < 1:
            raise ValueError("grid_intervals and substeps must be >= 1")


@dataclass
class IterationRecord:
    iteration: int
    theta_pure: float
    theta_reg: float
    cost: float
    step: Optional[float]
    armijo_k: Optional[int]
    wall_time: float


@dataclass
class IterationLog:
    records: List[IterationRecord] = field(default_factory=list)
    reason: Optional[str] = None

    def as_dicts(self):
        return [asdict(r) for r in self.records]

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.records])

    @property
    def thetas(self) -> np.ndarray:
        return np.array([r.theta_pure for r in self.records])


@dataclass(frozen=True)
class ArmijoStep:
    step: float
    k: int
    cost: float
    control: RelaxedControl
    trajectory: Trajectory


def terminal_cost(p: Problem, traj: Trajectory) -> float:
    return float(p.terminal_cost(traj.final))


def armijo(p: Problem, rc: RelaxedControl, d: DescentDirection, cfg: SolverConfig,
           cost: Optional[float] = None) -> Optional[ArmijoStep]:
    """Largest ``beta**k`` passing the sufficient-decrease test, or ``None`` on stall.

    The test is ``Psi(x(W + beta^k dW)) - Psi(x(W)) <= alpha beta^k theta``
    where ``theta`` is the Hamiltonian change of the direction actually
    taken (``d.theta_reg``, which equals ``d.theta_pure`` without l1
    penalty).  A candidate whose simulation blows up counts as a failure.
    """
    if cost is None:
        cost = terminal_cost(p, forward_relaxed(p, rc, cfg.substeps, dense=False))
    theta = d.theta_reg
    if not theta < 0:
        return None
    for k in range(cfg.armijo_kmax + 1):
        lam = cfg.beta ** k
        cand = apply_step(rc, d, lam)
        try:
            traj = forward_relaxed(p, cand, cfg.substeps)
            new_cost = terminal_cost(p, traj)
        except (IntegrationError, FloatingPointError) as exc:
            log.debug("armijo candidate k=%d failed: %s", k, exc)
            continue
        if np.isfinite(new_cost) and new_cost - cost <= cfg.alpha * lam * theta:
            return ArmijoStep(lam, k, new_cost, cand, traj)
    return None


def solve(p: Problem, atoms: AtomSet, cfg: SolverConfig = SolverConfig(),
          initial: Optional[RelaxedControl] = None, callback=None):
    """Descend on the weights of a sampled relaxed control until ``theta > -eps_tol``.

    Returns ``(control, log)``; ``log.reason`` is ``"converged"``,
    ``"max_iters"`` or ``"stalled"``.
    """
    grid = TimeGrid(p.horizon, cfg.grid_intervals)
    rc = initial if initial is not None else new_uniform(grid, atoms)
    if rc.grid != grid:
        raise ValueError("initial control lives on a different grid")
    history = IterationLog()
    t_start = time.perf_counter()
    traj = forward_relaxed(p, rc, cfg.substeps)
    cost = terminal_cost(p, traj)
    it = 0
    while True:
        costate = backward_costate(p, rc, traj)
        table = hamiltonian_table(p, rc, traj, costate)
        d = theta_and_direction(table, rc.weights, grid.dt, cfg.gamma_l1)
        record = IterationRecord(it, d.theta_pure, d.theta_reg, cost, None, None, 0.0)
        history.records.append(record)
        if d.theta_pure > -cfg.eps_tol:
            history.reason = "converged"
        elif it >= cfg.max_iters:
            history.reason = "max_iters"
        else:
            step = armijo(p, rc, d, cfg, cost)
            if step is None:
                history.reason = "stalled"
            else:
                record.step, record.armijo_k = step.step, step.k
                rc, traj, cost = step.control, step.trajectory, step.cost
        record.wall_time = time.perf_counter() - t_start
        log.info("iter %d cost %.10g theta %.3e step %s", it, record.cost, record.theta_pure, record.step)
        if callback is not None:
            callback(record, rc)
        if history.reason is not None:
            return rc, history
        it += 1
