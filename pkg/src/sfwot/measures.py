"""
Discrete measures on tempo-spatial grids, couplings between them, and the
information-theoretic primitives used by the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

#: Construction-time tolerance on total mass.
MASS_TOL = 1e-12
#: Inputs off by more than this are rejected rather than renormalized.
RENORMALIZE_TOL = 1e-9


class DimensionError(ValueError):
    """Two objects that must share supports do not."""


class GridPoint(NamedTuple):
    time: float
    coords: tuple[float, float]


def _normalized(weights, what):
    w = np.asarray(weights, dtype=float)
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError(f"{what} must be finite and nonnegative")
    total = w.sum()
    if abs(total - 1.0) > RENORMALIZE_TOL:
        raise ValueError(f"{what} sum to {total!r}, expected 1")
    if abs(total - 1.0) > MASS_TOL:
        w = w / total
    return w


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted finite support on a tempo-spatial grid.

    ``points`` is an ``(M, 3)`` array whose columns are ``(time, x, y)``.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must have shape (M, 3): (time, x, y)")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (pts.shape[0],):
            raise DimensionError("one weight per point is required")
        if np.any(pts[:, 0] < 0):
            raise ValueError("grid times must be nonnegative")
        if np.any(pts[:, 1:] < 0) or np.any(pts[:, 1:] > 1):
            raise ValueError("grid coordinates must lie in [0, 1]")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("support points must be pairwise distinct")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "weights", _readonly(_normalized(w, "weights")))

    @classmethod
    def from_gridpoints(cls, points, weights):
        pts = [(p.time, *p.coords) for p in points]
        return cls(np.array(pts, dtype=float).reshape(-1, 3), weights)

    def __len__(self):
        return len(self.weights)

    def gridpoint(self, i) -> GridPoint:
        t, x, y = self.points[i]
        return GridPoint(float(t), (float(x), float(y)))

    @property
    def times(self):
        return self.points[:, 0]

    @property
    def coords(self):
        return self.points[:, 1:]

    def same_support(self, other) -> bool:
        return self is other or (
            self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
        )


@dataclass(frozen=True, eq=False)
class Coupling:
    """Joint probability matrix over ``source x target`` supports.

    Marginal feasibility is not enforced here; use :func:`marginal_error`
    to measure it.
    """

    source: DiscreteMeasure
    target: DiscreteMeasure
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (len(self.source), len(self.target)):
            raise DimensionError(
                f"coupling shape {p.shape} does not match supports "
                f"({len(self.source)}, {len(self.target)})"
            )
        object.__setattr__(self, "probs", _readonly(_normalized(p, "coupling entries")))

    @classmethod
    def product(cls, mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
        return cls(mu, nu, np.outer(mu.weights, nu.weights))

    @property
    def shape(self):
        return self.probs.shape


def _check_same(p, q):
    if p.shape != q.shape or not (
        p.source.same_support(q.source) and p.target.same_support(q.target)
    ):
        raise DimensionError("couplings live on different supports")


def _kl(p, q):
    """KL divergence between nonnegative arrays with 0 log 0 = 0."""
    pos = p > 0
    if np.any(q[pos] <= 0):
        return np.inf
    pp = p[pos]
    return max(float(np.sum(pp * (np.log(pp) - np.log(q[pos])))), 0.0)


def relative_entropy(p: Coupling, q: Coupling) -> float:
    """``H(p || q)``; ``+inf`` when ``p`` is not absolutely continuous w.r.t. ``q``."""
    _check_same(p, q)
    return _kl(p.probs, q.probs)


def total_variation(p: Coupling, q: Coupling) -> float:
    """Half the entrywise L1 distance, so the result lies in ``[0, 1]``."""
    _check_same(p, q)
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


def marginals(p: Coupling):
    """Row-sum and column-sum vectors of a coupling."""
    return p.probs.sum(axis=1), p.probs.sum(axis=0)


def marginal_error(p: Coupling) -> float:
    """Largest L1 deviation of either marginal from the prescribed one."""
    rows, cols = marginals(p)
    return max(
        float(np.abs(rows - p.source.weights).sum()),
        float(np.abs(cols - p.target.weights).sum()),
    )


def convex_combine(p: Coupling, q: Coupling, alpha: float) -> Coupling:
    """Entrywise ``(1 - alpha) * p + alpha * q``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    _check_same(p, q)
    if alpha == 0.0:
        return p
    if alpha == 1.0:
        return q
    return Coupling(p.source, p.target, (1.0 - alpha) * p.probs + alpha * q.probs)
