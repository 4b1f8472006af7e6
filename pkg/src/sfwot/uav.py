"""
UAV relocation instance: tempo-spatial grids, flight-energy cost, marginals,
reference kernel and congestion model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .functional import BoxPartition, QuadraticCongestion, congestion_occupancy, quadratic_congestion
from .kernel import InfeasibleError, ReferenceKernel, gibbs_reference
from .measures import DiscreteMeasure


def travel_time(x, y, lam, beta):
    """Energy-optimal flight duration ``sqrt(lam * d(x, y)**2 / beta)``.

    Broadcasts over leading axes; the last axis holds spatial coordinates.
    """
    if not (lam > 0 and beta > 0):
        raise ValueError("lambda and beta must be positive")
    d = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)
    return np.sqrt(lam / beta) * d


def transport_cost(t, s, x, y, lam, beta):
    """Flight energy from ``(t, x)`` to ``(s, y)``; ``inf`` when ``s < t``.

    If the optimal duration fits in the window the cost is ``2 beta r_min``;
    otherwise the UAV flies for exactly ``s - t``.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    d = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)
    r_min = np.sqrt(lam / beta) * d
    dt = s - t
    with np.errstate(divide="ignore", invalid="ignore"):
        squeezed = (lam * d**2 / dt**2 + beta) * dt
    out = np.where(r_min <= dt, 2.0 * beta * r_min, squeezed)
    out = np.where((d == 0) & (dt >= 0), 0.0, out)
    out = np.where(dt < 0, np.inf, out)
    return out[()] if out.ndim == 0 else out


def cost_matrix(sources: DiscreteMeasure, targets: DiscreteMeasure, lam, beta):
    return transport_cost(
        sources.times[:, None],
        targets.times[None, :],
        sources.coords[:, None, :],
        targets.coords[None, :, :],
        lam,
        beta,
    )


# -- grids and marginals ----------------------------------------------------


def grid_points(times, nx, ny):
    """All ``(t, i/nx, j/ny)`` for ``t`` in ``times``, ``i < nx``, ``j < ny``."""
    tt, ii, jj = np.meshgrid(np.asarray(times, dtype=float), np.arange(nx) / nx, np.arange(ny) / ny, indexing="ij")
    return np.column_stack([tt.ravel(), ii.ravel(), jj.ravel()])


def half_gaussian_mixture(grid, centers, scales, weights, normals=None) -> DiscreteMeasure:
    """Mixture of Gaussian bumps, each optionally cut to a half-plane.

    Component ``k`` keeps the grid points with ``(x - c_k) . n_k >= 0``;
    a ``None`` normal keeps the full bump.
    """
    grid = np.asarray(grid, dtype=float)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    scales = np.broadcast_to(np.asarray(scales, dtype=float), (len(centers),))
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1) > 1e-9:
        raise ValueError("mixture weights must be nonnegative and sum to 1")
    if normals is None:
        normals = [None] * len(centers)
    xy = grid[:, 1:]
    dens = np.zeros(len(grid))
    for c, sig, w, n in zip(centers, scales, weights, normals):
        diff = xy - c
        bump = np.exp(-np.sum(diff**2, axis=1) / (2.0 * sig**2))
        if n is not None:
            bump = bump * (diff @ np.asarray(n, dtype=float) >= 0)
        dens += w * bump
    total = dens.sum()
    if not total > 0:
        raise ValueError("mixture has no mass on the grid")
    return DiscreteMeasure(grid, dens / total)


def point_masses(grid, points, weights) -> DiscreteMeasure:
    """Masses at the grid points nearest to ``points`` (spatial distance, earliest time)."""
    grid = np.asarray(grid, dtype=float)
    w = np.zeros(len(grid))
    for p, m in zip(np.atleast_2d(points), weights):
        p = np.asarray(p, dtype=float)
        if p.shape == (2,):
            d = np.linalg.norm(grid[:, 1:] - p, axis=1) + 1e-9 * grid[:, 0]
        else:
            d = np.linalg.norm(grid - p, axis=1)
        w[int(np.argmin(d))] += m
    return DiscreteMeasure(grid, w / w.sum())


MARGINAL_KINDS = ("half_gaussian_mixture", "point_masses", "uniform")


@dataclass(frozen=True)
class MarginalSpec:
    kind: str
    centers: tuple = ()
    scales: tuple = ()
    weights: tuple = ()
    normals: tuple = ()
    points: tuple = ()

    def __post_init__(self):
        if self.kind not in MARGINAL_KINDS:
            raise ValueError(f"marginal kind must be one of {MARGINAL_KINDS}, got {self.kind!r}")

    def build(self, grid) -> DiscreteMeasure:
        if self.kind == "uniform":
            return DiscreteMeasure(grid, np.full(len(grid), 1.0 / len(grid)))
        if self.kind == "point_masses":
            return point_masses(grid, self.points, self.weights)
        normals = [None if n is None or len(n) == 0 else n for n in self.normals] or None
        return half_gaussian_mixture(grid, self.centers, self.scales, self.weights, normals)


DEFAULT_SOURCE = MarginalSpec(
    "half_gaussian_mixture",
    centers=((0.25, 0.5), (0.5, 0.25)),
    scales=(0.1, 0.1),
    weights=(0.5, 0.5),
    normals=((-1.0, 0.0), (0.0, -1.0)),
)
DEFAULT_TARGET = MarginalSpec("point_masses", points=((0.9, 0.2), (0.2, 0.9)), weights=(0.5, 0.5))


@dataclass(frozen=True)
class ScenarioConfig:
    horizon: float = 0.5
    nx: int = 60
    ny: int = 41
    departure_times: tuple = (0.0,)
    arrival_times: tuple = (0.5,)
    lam: float = 1.0
    beta: float = 0.001
    epsilon: float = 0.1
    gamma: float = 20.0
    cells: tuple = (1, 4, 4)
    sample_count: int = 32
    speed: str = "optimal"
    source: MarginalSpec = field(default=DEFAULT_SOURCE)
    target: MarginalSpec = field(default=DEFAULT_TARGET)

    def __post_init__(self):
        for name in ("horizon", "lam", "beta", "epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.nx < 1 or self.ny < 1 or min(self.cells) < 1 or len(self.cells) != 3:
            raise ValueError("grid and cell counts must be positive")
        if not self.departure_times or not self.arrival_times:
            raise ValueError("departure and arrival times must be nonempty")
        if min(self.departure_times) < 0 or min(self.arrival_times) < 0:
            raise ValueError("times must be nonnegative")


@dataclass(frozen=True, eq=False)
class Scenario:
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    cost: np.ndarray
    kernel: ReferenceKernel
    model: QuadraticCongestion
    config: ScenarioConfig


def build_scenario(config: ScenarioConfig) -> Scenario:
    """Assemble everything the SFW solver consumes for one configuration."""
    X = grid_points(config.departure_times, config.nx, config.ny)
    Y = grid_points(config.arrival_times, config.nx, config.ny)
    mu = config.source.build(X)
    nu = config.target.build(Y)
    cost = cost_matrix(mu, nu, config.lam, config.beta)
    reach = np.isfinite(cost)
    if not reach[mu.weights > 0].any(axis=1).all():
        raise InfeasibleError("some departure precedes every arrival time")
    kernel = gibbs_reference(cost, config.epsilon, mu, nu)
    t_hi = max(max(config.arrival_times), max(config.departure_times), config.horizon)
    t_lo = min(config.departure_times)
    if t_hi <= t_lo:
        t_hi = t_lo + 1.0
    cells = BoxPartition.uniform([[t_lo, t_hi], [0.0, 1.0], [0.0, 1.0]], config.cells)
    spec = congestion_occupancy(
        cells, mu, nu, config.lam, config.beta,
        gamma=config.gamma, sample_count=config.sample_count, speed=config.speed,
        mask=kernel.support,
    )
    return Scenario(mu, nu, cost, kernel, quadratic_congestion(spec), config)
