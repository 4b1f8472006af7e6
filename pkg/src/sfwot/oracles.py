"""
Independent reference computations for tiny instances.

Nothing here calls the log-domain solver: the 2x2 best response is found
by bisection on a one-parameter family, small Wasserstein distances by an
exact linear program, and plain entropic transport by the classical
scaling form of Sinkhorn's algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .measures import Coupling, DimensionError, DiscreteMeasure, _kl, total_variation


class OracleRefusal(ValueError):
    """The instance is too large for an exact oracle."""


_TWO_POINTS = np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class TwoByTwoInstance:
    mu1: float
    nu1: float
    log_kernel: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        if not (0 < self.mu1 < 1 and 0 < self.nu1 < 1):
            raise ValueError("first-coordinate masses must lie in (0, 1)")
        lk = np.asarray(self.log_kernel, dtype=float)
        object.__setattr__(self, "log_kernel", lk - logsumexp(lk))
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=float))

    @property
    def mu(self):
        return DiscreteMeasure(_TWO_POINTS, [self.mu1, 1 - self.mu1])

    @property
    def nu(self):
        return DiscreteMeasure(_TWO_POINTS, [self.nu1, 1 - self.nu1])

    def kernel(self):
        from .kernel import ReferenceKernel

        return ReferenceKernel(self.mu, self.nu, self.log_kernel)

    @property
    def interval(self):
        return max(0.0, self.mu1 + self.nu1 - 1.0), min(self.mu1, self.nu1)

    def coupling_matrix(self, theta):
        m, n = self.mu1, self.nu1
        return np.array([[theta, m - theta], [n - theta, 1.0 - m - n + theta]])

    def objective(self, theta):
        p = self.coupling_matrix(theta)
        pos = p > 0
        return float(np.sum(p * self.phi) + np.sum(p[pos] * (np.log(p[pos]) - self.log_kernel[pos])))


def inner_oracle_2x2(inst: TwoByTwoInstance, width=1e-14, max_steps=200) -> Coupling:
    """Exact minimizer of ``<phi, pi> + H(pi || R)`` over 2x2 couplings.

    The derivative of the objective along the feasible segment is strictly
    increasing, so its root is bracketed and found by bisection.
    """
    lo, hi = inst.interval
    mu, nu = inst.mu, inst.nu
    if hi - lo <= 0:
        return Coupling(mu, nu, inst.coupling_matrix(lo))
    s = np.array([[1.0, -1.0], [-1.0, 1.0]])
    const = float(np.sum(s * (inst.phi - inst.log_kernel)))
    m, n = inst.mu1, inst.nu1

    def slope(th):
        return const + np.log(th) - np.log(m - th) - np.log(n - th) + np.log(1.0 - m - n + th)

    for _ in range(max_steps):
        if hi - lo <= width:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        with np.errstate(divide="ignore"):
            d = slope(mid)
        if d > 0:
            hi = mid
        else:
            lo = mid
    return Coupling(mu, nu, inst.coupling_matrix(0.5 * (lo + hi)))


def _w1(a, pa, b, pb, max_size=8):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) + len(b) > max_size:
        raise OracleRefusal(f"combined support {len(a) + len(b)} exceeds {max_size}")
    D = cdist(np.asarray(pa, dtype=float), np.asarray(pb, dtype=float))
    n, m = D.shape
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    res = linprog(D.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return max(float(res.fun), 0.0)


def wasserstein1_exact_small(p: DiscreteMeasure, q: DiscreteMeasure, max_size=8) -> float:
    """Exact ``W_1`` under the Euclidean metric on ``(time, x, y)``."""
    return _w1(p.weights, p.points, q.weights, q.points, max_size)


def coupling_points(pi: Coupling):
    """Points of the product space, one ``(t, x, y, s, x', y')`` row per matrix entry."""
    I, J = pi.shape
    src = np.repeat(pi.source.points, J, axis=0)
    tgt = np.tile(pi.target.points, (I, 1))
    return np.hstack([src, tgt])


def transport_entropy_check(p: Coupling, q: Coupling, max_size=8):
    """Compare ``W_1(p, q)`` with ``C sqrt(H(p || q) / 2)``.

    ``C = max(1, diam)`` where ``diam`` is the diameter of the common
    support; on unit-diameter spaces this is the plain Pinsker-type bound.
    Returns ``(lhs, rhs, ok)``.
    """
    if p.shape != q.shape:
        raise DimensionError("couplings live on different supports")
    pts = coupling_points(p)
    h = _kl(p.probs, q.probs)
    diam = float(cdist(pts, pts).max()) if len(pts) > 1 else 0.0
    rhs = max(1.0, diam) * np.sqrt(h / 2.0) if np.isfinite(h) else np.inf
    lhs = _w1(p.probs.ravel(), pts, q.probs.ravel(), pts, max_size)
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-9) + 1e-15)


def sinkhorn_eot(cost, epsilon, mu: DiscreteMeasure, nu: DiscreteMeasure, tol=1e-12, max_iters=100000):
    """Classical Sinkhorn-Knopp for ``min <c, pi> + eps H(pi || mu⊗nu)``.

    Scaling form ``pi = diag(u) K diag(v)`` with ``K = exp(-c/eps) mu⊗nu``,
    stopped on the column-marginal violation.
    """
    c = np.asarray(cost, dtype=float)
    K = np.exp(-(c - c[np.isfinite(c)].min()) / epsilon) * np.outer(mu.weights, nu.weights)
    a, b = mu.weights, nu.weights
    u = np.ones(len(a))
    v = np.ones(len(b))
    for _ in range(max_iters):
        u = np.divide(a, K @ v, out=np.zeros_like(a), where=a > 0)
        Ktu = K.T @ u
        err = np.abs(v * Ktu - b).sum()
        v = np.divide(b, Ktu, out=np.zeros_like(b), where=b > 0)
        if err <= tol:
            break
    plan = u[:, None] * K * v[None, :]
    return Coupling(mu, nu, plan / plan.sum())


def fixed_point_residual(final: Coupling, kernel, model, tol=1e-4, max_iters=30, schedule="gauss_seidel") -> float:
    """``TV(T(P), P)`` for one full best-response solve at ``P``."""
    from .inner import solve_inner

    phi = model.linear_derivative(final) / kernel.epsilon
    res = solve_inner(kernel, phi, final.source, final.target, tol=tol, max_iters=max_iters, schedule=schedule)
    return total_variation(res.plan, final)
