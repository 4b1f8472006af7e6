"""
Convex functionals of a coupling: value and linear derivative.

:class:`ZeroFunctional` reduces the problem to plain entropic transport and
:class:`LinearFunctional` adds a fixed linear cost. :class:`QuadraticCongestion` charges ``gamma * load**2``
per tempo-spatial cell, where a cell's load is the mass of all trajectories
that visit it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np
import scipy.sparse as sp

from .measures import Coupling, DimensionError, DiscreteMeasure


@runtime_checkable
class FunctionalModel(Protocol):
    def value(self, pi: Coupling) -> float: ...

    def linear_derivative(self, pi: Coupling) -> np.ndarray: ...


@dataclass(frozen=True)
class ZeroFunctional:
    def value(self, pi):
        return 0.0

    def linear_derivative(self, pi):
        return np.zeros(pi.shape)


def zero_functional() -> ZeroFunctional:
    return ZeroFunctional()


@dataclass(frozen=True, eq=False)
class LinearFunctional:
    """``F(pi) = <phi, pi>``; its derivative is ``phi`` everywhere."""

    phi: np.ndarray

    def value(self, pi):
        return float(np.sum(np.asarray(self.phi) * pi.probs))

    def linear_derivative(self, pi):
        return np.array(self.phi, dtype=float)


# -- cells -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoxPartition:
    """Disjoint axis-aligned boxes in ``(time, x, y)``.

    ``boxes`` has shape ``(N, 3, 2)`` holding ``[lo, hi]`` per axis. Boxes
    are half-open ``[lo, hi)`` except on faces lying on the outer boundary
    of the zone, which are closed so that the zone is covered exactly.
    """

    boxes: np.ndarray
    grid_shape: tuple | None = None

    def __post_init__(self):
        b = np.array(self.boxes, dtype=float).reshape(-1, 3, 2)
        if np.any(b[:, :, 1] <= b[:, :, 0]):
            raise ValueError("every box needs lo < hi on each axis")
        n = len(b)
        for a in range(n):
            for c in range(a + 1, n):
                overlap = np.minimum(b[a, :, 1], b[c, :, 1]) - np.maximum(b[a, :, 0], b[c, :, 0])
                if np.all(overlap > 0):
                    raise ValueError(f"cells {a} and {c} overlap")
        b.setflags(write=False)
        object.__setattr__(self, "boxes", b)

    def __len__(self):
        return len(self.boxes)

    @property
    def zone(self):
        return np.stack([self.boxes[:, :, 0].min(axis=0), self.boxes[:, :, 1].max(axis=0)], axis=1)

    @classmethod
    def uniform(cls, bounds, shape) -> BoxPartition:
        """Regular ``(ct, cx, cy)`` partition of ``bounds = [[t0,t1],[x0,x1],[y0,y1]]``."""
        bounds = np.asarray(bounds, dtype=float)
        edges = [np.linspace(lo, hi, k + 1) for (lo, hi), k in zip(bounds, shape)]
        boxes = [
            [[edges[0][a], edges[0][a + 1]], [edges[1][b], edges[1][b + 1]], [edges[2][c], edges[2][c + 1]]]
            for a in range(shape[0])
            for b in range(shape[1])
            for c in range(shape[2])
        ]
        return cls(np.array(boxes), grid_shape=tuple(int(k) for k in shape))

    def locate(self, pts) -> np.ndarray:
        """Index of the cell containing each ``(time, x, y)`` row, ``-1`` if none."""
        pts = np.asarray(pts, dtype=float)
        zone = self.zone
        out = np.full(pts.shape[:-1], -1, dtype=np.intp)
        if self.grid_shape is not None:
            shape = np.array(self.grid_shape)
            rel = (pts - zone[:, 0]) / (zone[:, 1] - zone[:, 0])
            inside = np.all((rel >= 0) & (rel <= 1), axis=-1)
            idx = np.minimum(np.floor(rel * shape).astype(np.intp), shape - 1)
            flat = (idx[..., 0] * shape[1] + idx[..., 1]) * shape[2] + idx[..., 2]
            out[inside] = flat[inside]
            return out
        for n, box in enumerate(self.boxes):
            lo, hi = box[:, 0], box[:, 1]
            upper = np.where(hi >= zone[:, 1], pts <= hi, pts < hi)
            inside = np.all((pts >= lo) & upper, axis=-1) & (out < 0)
            out[inside] = n
        return out


# -- trajectories and occupancy --------------------------------------------


def _pair_geometry(sources, targets, lam, beta):
    from .uav import travel_time

    ts = sources.times[:, None]
    tt = targets.times[None, :]
    x = sources.coords[:, None, :]
    y = targets.coords[None, :, :]
    r_min = travel_time(x, y, lam, beta)
    return ts, tt, x, y, r_min


def trajectory_samples(t, x, s, y, lam, beta, sample_count=32, speed="optimal"):
    """Sampled ``(time, x, y)`` positions of one flight.

    Samples are uniform over ``[t, t + min(r_min, s - t)]``. With
    ``speed="optimal"`` the position is ``x + (y - x) (s' - t) / r_min``;
    with ``speed="arrival"`` the denominator is the actual flight time
    ``min(r_min, s - t)``, so the path always ends at ``y``.
    """
    from .uav import travel_time

    if s < t:
        return np.empty((0, 3))
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r_min = float(travel_time(x, y, lam, beta))
    window = min(r_min, s - t)
    frac = np.linspace(0.0, 1.0, sample_count)
    times = t + frac * window
    denom = r_min if speed == "optimal" else window
    rate = 0.0 if denom == 0 else window / denom
    pos = x + np.outer(frac * rate, y - x)
    return np.column_stack([times, pos])


@dataclass(frozen=True, eq=False)
class CongestionSpec:
    """Cells, penalty strength, and the precomputed occupancy of every pair.

    ``occupancy`` is a sparse ``(N, I*J)`` 0/1 matrix: entry ``(n, i*J + j)``
    is 1 iff the flight from source ``i`` to target ``j`` visits cell ``n``.
    """

    cells: BoxPartition
    gamma: float
    occupancy: sp.csr_matrix = field(repr=False)
    shape: tuple
    sample_count: int = 32

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("gamma must be nonnegative")
        if self.occupancy.shape != (len(self.cells), self.shape[0] * self.shape[1]):
            raise DimensionError("occupancy shape does not match cells and supports")

    def dense_occupancy(self):
        return self.occupancy.toarray().reshape(len(self.cells), *self.shape)

    def with_gamma(self, gamma) -> CongestionSpec:
        return CongestionSpec(self.cells, float(gamma), self.occupancy, self.shape, self.sample_count)


def congestion_occupancy(
    cells: BoxPartition,
    sources: DiscreteMeasure,
    targets: DiscreteMeasure,
    lam,
    beta,
    gamma=1.0,
    sample_count=32,
    speed="optimal",
    mask=None,
    chunk=20000,
) -> CongestionSpec:
    """Sample each straight-line flight and record which cells it visits.

    Pairs with ``s < t`` (infinite cost) get no occupancy. ``mask`` restricts
    the computation to selected pairs, e.g. the support of the reference
    kernel; pairs outside it are treated like infeasible ones.
    """
    if sample_count < 2:
        raise ValueError("sample_count must be at least 2")
    if speed not in ("optimal", "arrival"):
        raise ValueError(f"unknown speed mode {speed!r}")
    ts, tt, x, y, r_min = _pair_geometry(sources, targets, lam, beta)
    I, J = len(sources), len(targets)
    feasible = np.broadcast_to(tt >= ts, (I, J))
    if mask is not None:
        feasible = feasible & np.asarray(mask, dtype=bool)
    ii, jj = np.nonzero(feasible)
    frac = np.linspace(0.0, 1.0, sample_count)
    rows, cols = [], []
    for start in range(0, len(ii), chunk):
        a, b = ii[start:start + chunk], jj[start:start + chunk]
        t0 = sources.times[a]
        xa = sources.coords[a]
        yb = targets.coords[b]
        rm = r_min[a, b]
        window = np.minimum(rm, targets.times[b] - t0)
        denom = rm if speed == "optimal" else window
        with np.errstate(invalid="ignore", divide="ignore"):
            rate = np.where(denom > 0, window / denom, 0.0)
        step = frac[None, :] * rate[:, None]
        pts = np.empty((len(a), sample_count, 3))
        pts[..., 0] = t0[:, None] + frac[None, :] * window[:, None]
        pts[..., 1:] = xa[:, None, :] + step[..., None] * (yb - xa)[:, None, :]
        cell = cells.locate(pts)
        hit = np.zeros((len(a), len(cells)), dtype=bool)
        k, s = np.nonzero(cell >= 0)
        hit[k, cell[k, s]] = True
        pk, pn = np.nonzero(hit)
        rows.append(pn)
        cols.append(a[pk] * J + b[pk])
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=np.intp)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.intp)
    occ = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(cells), I * J))
    return CongestionSpec(cells, float(gamma), occ, (I, J), int(sample_count))


@dataclass(frozen=True, eq=False)
class QuadraticCongestion:
    """``F(pi) = gamma * sum_n load_n**2`` with ``load_n = sum_ij O_n(i,j) pi_ij``."""

    spec: CongestionSpec

    def loads(self, pi) -> np.ndarray:
        p = pi.probs if isinstance(pi, Coupling) else np.asarray(pi)
        if p.shape != self.spec.shape:
            raise DimensionError("coupling shape does not match occupancy")
        return self.spec.occupancy @ p.ravel()

    def value(self, pi):
        load = self.loads(pi)
        return float(self.spec.gamma * np.dot(load, load))

    def linear_derivative(self, pi):
        load = self.loads(pi)
        return (self.spec.occupancy.T @ (2.0 * self.spec.gamma * load)).reshape(self.spec.shape)


def quadratic_congestion(spec: CongestionSpec) -> QuadraticCongestion:
    return QuadraticCongestion(spec)


def derivative_check(model: FunctionalModel, p: Coupling, q: Coupling, etas) -> list[float]:
    """First-order Taylor residuals ``|F(p + eta (q-p)) - F(p) - eta <dF(p), q-p>|``."""
    if p.shape != q.shape:
        raise DimensionError("couplings live on different supports")
    f_p = model.value(p)
    diff = q.probs - p.probs
    slope = float(np.sum(model.linear_derivative(p) * diff))
    out = []
    for eta in etas:
        step = eta * diff
        mid = p if not step.any() else Coupling(p.source, p.target, p.probs + step)
        out.append(abs(model.value(mid) - f_p - eta * slope))
    return out
