"""Optimal control problems in Mayer form.

A :class:`Problem` bundles the vector field ``f(t, x, u)``, the terminal
cost ``Psi(x(T))``, the box of admissible inputs, the horizon and the
initial state.  Running costs are folded into an extra state by
:func:`augment_mayer`.

Vector fields may be *vectorized*: when ``Problem.vectorized`` is true the
callables must accept ``u`` with shape ``(N, m)`` and return ``(N, n)``
(and ``(N, n, n)`` for the Jacobian).  Every builtin is vectorized; user
supplied callables default to a per-atom loop.

The solver assumes ``f`` and ``Psi`` are Lipschitz continuously
differentiable.  Nothing here checks that.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Mapping, Optional

import numpy as np

FD_REL_STEP = 1e-6

FieldFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
JacobianFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


class FieldEvaluationError(ArithmeticError):
    """Raised when a vector field or its Jacobian returns non-finite values."""


@dataclass(frozen=True)
class ControlBox:
    """Axis-aligned box ``[lower, upper]`` of admissible inputs."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        if lower.size < 1:
            raise ValueError("control box needs at least one axis")
        if np.any(lower > upper):
            raise ValueError(f"lower bound exceeds upper bound: {lower} > {upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, u, tol: float = 0.0) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))


@dataclass(frozen=True)
class Problem:
    """Input-constrained optimal control problem ``min Psi(x(T))``.

    Parameters
    ----------
    n, m : int
        State and input dimensions.
    horizon : float
        Final time ``T > 0``.
    initial_state : array_like, shape (n,)
    control_box : ControlBox
    field : callable ``(t, x, u) -> xdot``
    terminal_cost : callable ``(x_T) -> float``
    jacobian_x : callable ``(t, x, u) -> (n, n)``, optional
        Falls back to central finite differences when absent.
    terminal_gradient : callable ``(x_T) -> (n,)``, optional
        Falls back to central finite differences when absent.
    vectorized : bool
        Whether ``field``/``jacobian_x`` broadcast over a leading atom axis of ``u``.
    """

    n: int
    m: int
    horizon: float
    initial_state: np.ndarray
    control_box: ControlBox
    field: FieldFn
    terminal_cost: Callable[[np.ndarray], float]
    jacobian_x: Optional[JacobianFn] = None
    terminal_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    vectorized: bool = False
    name: str = ""
    params: Mapping = dc_field(default_factory=dict)

    def __post_init__(self):
        x0 = np.asarray(self.initial_state, dtype=float).reshape(-1)
        if x0.size != self.n:
            raise ValueError(f"initial_state has {x0.size} entries, expected n={self.n}")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.control_box.dim != self.m:
            raise ValueError(f"control box has dimension {self.control_box.dim}, expected m={self.m}")
        object.__setattr__(self, "initial_state", x0)
        object.__setattr__(self, "horizon", float(self.horizon))

    def field_batch(self, t: float, x: np.ndarray, atoms: np.ndarray) -> np.ndarray:
        """Evaluate ``f(t, x, u_i)`` for every row of ``atoms``; returns ``(N, n)``."""
        atoms = np.asarray(atoms, dtype=float).reshape(-1, self.m)
        if self.vectorized:
            out = np.asarray(self.field(t, x, atoms), dtype=float).reshape(atoms.shape[0], self.n)
        else:
            out = np.array([np.asarray(self.field(t, x, u), dtype=float).reshape(self.n) for u in atoms])
            out = out.reshape(atoms.shape[0], self.n)
        if not np.all(np.isfinite(out)):
            bad = int(np.argmax(~np.all(np.isfinite(out), axis=1)))
            raise FieldEvaluationError(f"non-finite field value at t={t}, x={x}, u={atoms[bad]}")
        return out

    def jacobian_batch(self, t: float, x: np.ndarray, atoms: np.ndarray) -> np.ndarray:
        """State Jacobians ``df/dx(t, x, u_i)`` stacked as ``(N, n, n)``."""
        atoms = np.asarray(atoms, dtype=float).reshape(-1, self.m)
        if self.jacobian_x is not None and self.vectorized:
            out = np.asarray(self.jacobian_x(t, x, atoms), dtype=float)
            out = out.reshape(atoms.shape[0], self.n, self.n)
            if not np.all(np.isfinite(out)):
                raise FieldEvaluationError(f"non-finite Jacobian at t={t}, x={x}")
            return out
        return np.array([eval_jacobian_x(self, t, x, u) for u in atoms]).reshape(-1, self.n, self.n)

    def grad_terminal(self, x_T: np.ndarray) -> np.ndarray:
        x_T = np.asarray(x_T, dtype=float)
        if self.terminal_gradient is not None:
            g = np.asarray(self.terminal_gradient(x_T), dtype=float).reshape(self.n)
        else:
            g = central_difference(lambda z: np.atleast_1d(self.terminal_cost(z)), x_T)[0]
        if not np.all(np.isfinite(g)):
            raise FieldEvaluationError(f"non-finite terminal gradient at x={x_T}")
        return g


def fd_steps(x: np.ndarray) -> np.ndarray:
    return FD_REL_STEP * np.maximum(1.0, np.abs(x))


def central_difference(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of a vector function, columns per state component."""
    x = np.asarray(x, dtype=float)
    steps = fd_steps(x)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = steps[j]
        cols.append((np.asarray(fun(x + e), dtype=float) - np.asarray(fun(x - e), dtype=float)) / (2 * steps[j]))
    return np.stack(cols, axis=-1)


def eval_jacobian_x(p: Problem, t: float, x, u) -> np.ndarray:
    """Return ``df/dx`` at ``(t, x, u)``, analytic if available.

    The fallback uses central differences with per-component step
    ``1e-6 * max(1, |x_j|)``.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if p.jacobian_x is not None:
        J = np.asarray(p.jacobian_x(t, x, u[None, :] if p.vectorized else u), dtype=float)
        J = J.reshape(p.n, p.n)
    else:
        J = central_difference(lambda z: p.field_batch(t, z, u)[0], x)
    if not np.all(np.isfinite(J)):
        raise FieldEvaluationError(f"non-finite Jacobian at t={t}, x={x}, u={u}")
    return J


@dataclass(frozen=True)
class RunningCostProblem:
    """Problem with a running cost ``int_0^T L(t, x, u) dt`` (Bolza form)."""

    n: int
    m: int
    horizon: float
    initial_state: np.ndarray
    control_box: ControlBox
    field: FieldFn
    running_cost: Optional[Callable] = None
    terminal_cost: Optional[Callable[[np.ndarray], float]] = None
    jacobian_x: Optional[JacobianFn] = None
    running_cost_grad_x: Optional[Callable] = None
    terminal_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    vectorized: bool = False
    name: str = ""
    params: Mapping = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.running_cost is None and self.terminal_cost is None:
            raise ValueError("need a running cost, a terminal cost, or both")


def augment_mayer(p: RunningCostProblem) -> Problem:
    """Convert a running-cost problem into Mayer form.

    The running cost becomes the derivative of an extra state ``x_{n+1}``
    with ``x_{n+1}(0) = 0``; the new terminal cost is
    ``Psi(x_{1..n}(T)) + x_{n+1}(T)``.
    """
    n, m = p.n, p.m
    f, L = p.field, p.running_cost
    vec = p.vectorized

    def field(t, x, u):
        xs = x[:n]
        fx = np.asarray(f(t, xs, u), dtype=float)
        lx = 0.0 if L is None else np.asarray(L(t, xs, u), dtype=float)
        if vec:
            lx = np.broadcast_to(lx, fx.shape[:-1])
            return np.concatenate([fx, lx[..., None]], axis=-1)
        return np.append(fx.reshape(n), float(lx))

    def running_grad(t, xs, u):
        if L is None:
            return np.zeros((u.shape[0], n) if vec else n)
        if p.running_cost_grad_x is not None:
            return np.asarray(p.running_cost_grad_x(t, xs, u), dtype=float)
        if vec:
            return np.stack([central_difference(lambda z: np.atleast_1d(L(t, z, ui[None, :]))[0], xs) for ui in u])
        return central_difference(lambda z: np.atleast_1d(L(t, z, u)), xs)[0]

    def jacobian_x(t, x, u):
        xs = x[:n]
        if p.jacobian_x is not None:
            Jf = np.asarray(p.jacobian_x(t, xs, u), dtype=float)
        elif vec:
            Jf = np.stack([central_difference(lambda z: np.asarray(f(t, z, ui[None, :]))[0], xs) for ui in u])
        else:
            Jf = central_difference(lambda z: np.asarray(f(t, z, u)), xs)
        gl = running_grad(t, xs, u)
        lead = Jf.shape[:-2]
        J = np.zeros(lead + (n + 1, n + 1))
        J[..., :n, :n] = Jf
        J[..., n, :n] = gl
        return J

    psi = p.terminal_cost

    def terminal_cost(x):
        base = 0.0 if psi is None else float(psi(x[:n]))
        return base + float(x[n])

    def terminal_gradient(x):
        g = np.zeros(n + 1)
        if psi is not None:
            if p.terminal_gradient is not None:
                g[:n] = p.terminal_gradient(x[:n])
            else:
                g[:n] = central_difference(lambda z: np.atleast_1d(psi(z)), x[:n])[0]
        g[n] = 1.0
        return g

    return Problem(
        n=n + 1,
        m=m,
        horizon=p.horizon,
        initial_state=np.append(np.asarray(p.initial_state, dtype=float), 0.0),
        control_box=p.control_box,
        field=field,
        terminal_cost=terminal_cost,
        jacobian_x=jacobian_x,
        terminal_gradient=terminal_gradient,
        vectorized=vec,
        name=p.name,
        params=p.params,
    )


# ---------------------------------------------------------------------------
# builtin problems


def _toy_abs(overrides):
    bound = float(overrides.get("u_bound", 7.0))
    horizon = float(overrides.get("horizon", 1.0))

    def field(t, x, u):
        u0 = u[..., 0]
        return (0.5 * np.abs(u0) - np.cos(u0))[..., None]

    def jac(t, x, u):
        return np.zeros(u.shape[:-1] + (1, 1))

    return Problem(
        n=1,
        m=1,
        horizon=horizon,
        initial_state=np.zeros(1),
        control_box=ControlBox([-bound], [bound]),
        field=field,
        terminal_cost=lambda x: float(x[0]),
        jacobian_x=jac,
        terminal_gradient=lambda x: np.ones(1),
        vectorized=True,
        name="toy_abs",
        params={"u_bound": bound, "horizon": horizon},
    )


LQR_DEFAULTS = dict(horizon=2.0, J=0.0475, m=1.5, r=0.25, g=9.8, gamma=0.51, d=0.2, l=0.05, eta=0.05)


def _constrained_lqr(overrides):
    prm = {**LQR_DEFAULTS, **overrides}
    J, mass, r, g = prm["J"], prm["m"], prm["r"], prm["g"]
    gamma, d, arm, eta = prm["gamma"], prm["d"], prm["l"], prm["eta"]
    # states: x1, x2, x3, x1', x2', x3'
    A = np.zeros((6, 6))
    A[0:3, 3:6] = np.eye(3)
    A[3, 3] = -d / mass
    A[3, 2] = -gamma
    A[4, 4] = -d / mass
    A[5, 2] = -mass * g * arm / J
    B = np.zeros((6, 2))
    B[3, 0] = 1.0 / mass
    B[4, 1] = 1.0 / mass
    B[5, 0] = r / J
    offset = np.array([0.3, 0.5, 0.0])

    def field(t, x, u):
        return A @ x + u @ B.T

    def jac(t, x, u):
        return np.broadcast_to(A, u.shape[:-1] + (6, 6)).copy()

    def running_cost(t, x, u):
        e = x[:3] + offset
        return e @ e + eta * np.sum(u * u, axis=-1)

    def running_grad(t, x, u):
        g_ = np.zeros(6)
        g_[:3] = 2.0 * (x[:3] + offset)
        return np.broadcast_to(g_, u.shape[:-1] + (6,)).copy()

    rp = RunningCostProblem(
        n=6,
        m=2,
        horizon=prm["horizon"],
        initial_state=np.zeros(6),
        control_box=ControlBox([-1.0, -1.0], [1.0, 1.0]),
        field=field,
        running_cost=running_cost,
        jacobian_x=jac,
        running_cost_grad_x=running_grad,
        vectorized=True,
        name="constrained_lqr",
        params=prm,
    )
    return augment_mayer(rp)


QUADROTOR_DEFAULTS = dict(
    horizon=5.0,
    m=1.3,
    Ix=0.0605,
    Iy=0.0605,
    b=0.1,
    K=1.0,
    L=0.25,
    eta=0.05,
    g=9.8,
    gravity=False,
    coupling="printed",
    target=(-1.2, -1.0, -1.0),
)


def _quadrotor(overrides):
    prm = {**QUADROTOR_DEFAULTS, **overrides}
    mass, Ix, Iy, b, K, arm = prm["m"], prm["Ix"], prm["Iy"], prm["b"], prm["K"], prm["L"]
    eta = prm["eta"]
    grav = float(prm["g"]) if prm["gravity"] else 0.0
    if prm["coupling"] not in ("printed", "rotational"):
        raise ValueError(f"coupling must be 'printed' or 'rotational', got {prm['coupling']!r}")
    # printed: pitch acceleration carries +x5' x6'; rotational: +x4' x6'
    rot = prm["coupling"] == "rotational"
    c = np.asarray(prm["target"], dtype=float).reshape(3)
    prm["target"] = tuple(float(v) for v in c)

    def field(t, x, u):
        v = x[6:]
        s4, s5 = np.sin(x[3]), np.sin(x[4])
        c4, c5 = np.cos(x[3]), np.cos(x[4])
        thrust = K / mass * np.sum(u, axis=-1)
        lead = u.shape[:-1]
        out = np.empty(lead + (12,))
        out[..., :6] = v
        out[..., 6] = -b / mass * v[0] + s5 * thrust
        out[..., 7] = -b / mass * v[1] + s4 * c5 * thrust
        out[..., 8] = -b / mass * v[2] + c4 * c5 * thrust - grav
        out[..., 9] = -v[4] * v[5] + K * arm / Ix * (u[..., 1] - u[..., 3])
        out[..., 10] = (v[3] if rot else v[4]) * v[5] + K * arm / Iy * (u[..., 2] - u[..., 0])
        out[..., 11] = K / (Ix + Iy) * (u[..., 0] - u[..., 1] + u[..., 2] - u[..., 3])
        return out

    def jac(t, x, u):
        v = x[6:]
        s4, s5 = np.sin(x[3]), np.sin(x[4])
        c4, c5 = np.cos(x[3]), np.cos(x[4])
        thrust = K / mass * np.sum(u, axis=-1)
        lead = u.shape[:-1]
        J = np.zeros(lead + (12, 12))
        for i in range(6):
            J[..., i, 6 + i] = 1.0
        J[..., 6, 6] = -b / mass
        J[..., 6, 4] = c5 * thrust
        J[..., 7, 7] = -b / mass
        J[..., 7, 3] = c4 * c5 * thrust
        J[..., 7, 4] = -s4 * s5 * thrust
        J[..., 8, 8] = -b / mass
        J[..., 8, 3] = -s4 * c5 * thrust
        J[..., 8, 4] = -c4 * s5 * thrust
        J[..., 9, 10] = -v[5]
        J[..., 9, 11] = -v[4]
        if rot:
            J[..., 10, 9] = v[5]
            J[..., 10, 11] = v[3]
        else:
            J[..., 10, 10] = v[5]
            J[..., 10, 11] = v[4]
        return J

    def running_cost(t, x, u):
        e = x[:3] - c
        return e @ e + np.sum(np.sin(x[3:6]) ** 2) + eta * np.sqrt(np.sum(u * u, axis=-1))

    def running_grad(t, x, u):
        g_ = np.zeros(12)
        g_[:3] = 2.0 * (x[:3] - c)
        g_[3:6] = np.sin(2.0 * x[3:6])
        return np.broadcast_to(g_, u.shape[:-1] + (12,)).copy()

    rp = RunningCostProblem(
        n=12,
        m=4,
        horizon=prm["horizon"],
        initial_state=np.zeros(12),
        control_box=ControlBox(np.zeros(4), 2.0 * np.ones(4)),
        field=field,
        running_cost=running_cost,
        jacobian_x=jac,
        running_cost_grad_x=running_grad,
        vectorized=True,
        name="quadrotor",
        params=prm,
    )
    return augment_mayer(rp)


def _convex_hull_demo(overrides):
    # f(x, u) = x + (u^2 + 1, u) on U = [-1, 1]; only used for hull plots
    def field(t, x, u):
        u0 = u[..., 0]
        return np.stack([x[0] + u0 ** 2 + 1.0, x[1] + u0], axis=-1)

    def jac(t, x, u):
        return np.broadcast_to(np.eye(2), u.shape[:-1] + (2, 2)).copy()

    return Problem(
        n=2,
        m=1,
        horizon=float(overrides.get("horizon", 1.0)),
        initial_state=np.zeros(2),
        control_box=ControlBox([-1.0], [1.0]),
        field=field,
        terminal_cost=lambda x: float(x[0]),
        jacobian_x=jac,
        terminal_gradient=lambda x: np.array([1.0, 0.0]),
        vectorized=True,
        name="convex_hull_demo",
    )


BUILTINS = {
    "toy_abs": _toy_abs,
    "constrained_lqr": _constrained_lqr,
    "quadrotor": _quadrotor,
    "convex_hull_demo": _convex_hull_demo,
}

_ALLOWED_OVERRIDES = {
    "toy_abs": {"u_bound", "horizon"},
    "constrained_lqr": set(LQR_DEFAULTS),
    "quadrotor": set(QUADROTOR_DEFAULTS),
    "convex_hull_demo": {"horizon"},
}


def builtin(name: str, overrides: Optional[Mapping] = None) -> Problem:
    """Construct one of the builtin problems by name.

    ``toy_abs``
        ``xdot = |u|/2 - cos u``, ``x(0) = 0``, cost ``x(1)``, ``U = [-7, 7]``.
    ``constrained_lqr``
        Six-state coupled linear system with quadratic tracking cost,
        ``U = [-1, 1]^2``, ``T = 2``.
    ``quadrotor``
        Twelve-state nonlinear quadrotor steering to ``target``,
        ``U = [0, 2]^4``, ``T = 5`` by default.  ``gravity`` (default off)
        subtracts ``g`` from the vertical acceleration.
    ``convex_hull_demo``
        Planar field ``x + (u^2 + 1, u)`` used for convex hull plots.
    """
    overrides = dict(overrides or {})
    if name not in BUILTINS:
        raise KeyError(f"unknown builtin problem {name!r}; choose from {sorted(BUILTINS)}")
    unknown = set(overrides) - _ALLOWED_OVERRIDES[name]
    if unknown:
        raise KeyError(f"unknown override(s) for {name}: {sorted(unknown)}")
    return BUILTINS[name](overrides)
