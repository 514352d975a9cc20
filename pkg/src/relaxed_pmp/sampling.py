"""Control atoms drawn from the input box, and sampled vector-field sets.

Monte Carlo draws use numpy's ``Generator`` on the PCG64 bit generator,
whose stream is fixed for a given seed on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .problem import ControlBox, Problem


@dataclass(frozen=True)
class AtomSet:
    """Ordered set of control values ``u_1 .. u_N`` (rows of ``atoms``)."""

    atoms: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] < 1:
            raise ValueError("atoms must be a non-empty (N, m) array")
        a.setflags(write=False)
        object.__setattr__(self, "atoms", a)

    @property
    def count(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def __len__(self):
        return self.count

    def __getitem__(self, i):
        return self.atoms[i]


def sample_uniform(box: ControlBox, N: int, seed: int) -> AtomSet:
    """``N`` i.i.d. uniform draws from ``box`` (PCG64, seeded)."""
    if N < 1:
        raise ValueError("need at least one sample")
    rng = np.random.Generator(np.random.PCG64(seed))
    draws = rng.random((N, box.dim))
    atoms = box.lower + draws * (box.upper - box.lower)
    # degenerate axes stay exactly on the bound
    atoms = np.where(box.upper == box.lower, box.lower, atoms)
    return AtomSet(atoms, seed=seed)


def sample_grid(box: ControlBox, per_axis: Sequence[int]) -> AtomSet:
    """Tensor grid over ``box`` in lexicographic order (last axis fastest).

    Axes with a single point sit at the box midpoint; otherwise endpoints
    are included.
    """
    per_axis = [int(k) for k in per_axis]
    if not per_axis:
        raise ValueError("per_axis must not be empty")
    if len(per_axis) != box.dim:
        raise ValueError(f"per_axis has {len(per_axis)} entries, box has dimension {box.dim}")
    if any(k < 1 for k in per_axis):
        raise ValueError("every axis needs at least one point")
    axes = []
    for lo, hi, k in zip(box.lower, box.upper, per_axis):
        axes.append(np.array([0.5 * (lo + hi)]) if k == 1 else np.linspace(lo, hi, k))
    mesh = np.meshgrid(*axes, indexing="ij")
    return AtomSet(np.stack([g.reshape(-1) for g in mesh], axis=1))


def monotone_chain(points: np.ndarray) -> list:
    """Indices of the counter-clockwise convex hull of 2-D points.

    Collinear boundary points (up to round-off) are dropped; a single (or repeated) point
    yields one index.
    """
    pts = np.asarray(points, dtype=float)
    order = sorted(range(len(pts)), key=lambda i: (pts[i, 0], pts[i, 1]))
    # drop exact duplicates, keep first index
    uniq = []
    for i in order:
        if not uniq or not np.array_equal(pts[i], pts[uniq[-1]]):
            uniq.append(i)
    if len(uniq) <= 2:
        return uniq

    def turns_left(o, a, b):
        # exact sign; the float value is trusted only when clearly away from zero
        oa, ob = pts[a] - pts[o], pts[b] - pts[o]
        cross = oa[0] * ob[1] - oa[1] * ob[0]
        if abs(cross) > 1e-12 * np.hypot(*oa) * np.hypot(*ob):
            return cross > 0
        (ox, oy), (ax, ay), (bx, by) = (map(Fraction, pts[k]) for k in (o, a, b))
        return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox) > 0

    lower, upper = [], []
    for i in uniq:
        while len(lower) >= 2 and not turns_left(lower[-2], lower[-1], i):
            lower.pop()
        lower.append(i)
    for i in reversed(uniq):
        while len(upper) >= 2 and not turns_left(upper[-2], upper[-1], i):
            upper.pop()
        upper.append(i)
    hull = lower[:-1] + upper[:-1]

    def straight(u, v, w):
        # v sits on segment uw up to round-off (sine of the turn tiny, same heading)
        uv, vw = pts[v] - pts[u], pts[w] - pts[v]
        cross = uv[0] * vw[1] - uv[1] * vw[0]
        return abs(cross) <= 1e-13 * np.hypot(*uv) * np.hypot(*vw) and uv @ vw > 0

    changed = True
    while changed and len(hull) > 2:
        changed = False
        for j in range(len(hull)):
            if straight(hull[j - 1], hull[j], hull[(j + 1) % len(hull)]):
                del hull[j]
                changed = True
                break
    return hull


def hull_points(p: Problem, t: float, x, atoms: AtomSet):
    """Sampled vector-field set ``{f(t, x, u_i)}`` and its planar hull.

    Returns ``(points, hull_indices)``; ``hull_indices`` is ``None`` unless
    the state is two-dimensional.
    """
    x = np.asarray(x, dtype=float)
    points = p.field_batch(t, x, atoms.atoms)
    hull = monotone_chain(points) if p.n == 2 else None
    return points, hull
