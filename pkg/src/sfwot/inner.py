"""
Entropic best response: minimize ``<phi, pi> + H(pi || R)`` over couplings
with fixed marginals, by log-domain Sinkhorn scaling on the tilted kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .kernel import InfeasibleError, ReferenceKernel
from .measures import Coupling, DimensionError, DiscreteMeasure

SCHEDULES = ("gauss_seidel", "jacobi")


@dataclass(frozen=True)
class InnerSettings:
    tol: float = 1e-4
    max_iters: int = 30
    schedule: str = "gauss_seidel"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("inner tol must be positive")
        if self.max_iters < 1:
            raise ValueError("inner max_iters must be positive")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")


@dataclass(frozen=True, eq=False)
class Potentials:
    """Dual potentials with the plan ``P = exp(c - phi - f - g) R``.

    Gauge: ``sum mu f = 0`` and ``sum nu g = 0``; the remaining additive
    constant is reported separately as ``InnerResult.log_constant``.
    """

    f: np.ndarray
    g: np.ndarray


@dataclass(frozen=True, eq=False)
class InnerResult:
    plan: Coupling
    potentials: Potentials
    iterations: int
    final_step_tv: float
    log_constant: float
    converged: bool
    marginal_error: float = 0.0
    log_plan: np.ndarray | None = field(default=None, repr=False)


def _weighted_median(values, weights):
    order = np.argsort(values)
    cw = np.cumsum(weights[order])
    k = np.searchsorted(cw, 0.5 * cw[-1])
    return float(values[order][min(k, len(values) - 1)])


def solve_inner(
    kernel: ReferenceKernel,
    phi,
    mu: DiscreteMeasure | None = None,
    nu: DiscreteMeasure | None = None,
    tol: float = 1e-4,
    max_iters: int = 30,
    schedule: str = "gauss_seidel",
    init: Potentials | None = None,
) -> InnerResult:
    """Sinkhorn scaling for the plan ``P ∝ exp(-phi - f ⊕ g) R``.

    Each sweep rescales rows toward ``mu`` and columns toward ``nu``.
    Under ``gauss_seidel`` the plan is re-formed between the two updates;
    under ``jacobi`` both use the same plan. Iteration stops once the total
    variation between consecutive plans and the marginal violation (in
    total variation) both drop to ``tol``; the step size alone can be tiny
    while the plan is still far from feasible when the kernel is sharp.

    Computation is restricted to the block of positive-mass rows and
    columns; every other entry of the plan is exactly zero.
    """
    mu = kernel.source if mu is None else mu
    nu = kernel.target if nu is None else nu
    InnerSettings(tol, max_iters, schedule)
    phi = np.asarray(phi, dtype=float)
    if phi.shape != kernel.log_weights.shape or (len(mu), len(nu)) != phi.shape:
        raise DimensionError("potential, kernel and marginals disagree in shape")

    rows = np.flatnonzero(mu.weights > 0)
    cols = np.flatnonzero(nu.weights > 0)
    lw = kernel.log_weights[np.ix_(rows, cols)]
    ph = phi[np.ix_(rows, cols)]
    supp = np.isfinite(lw)
    if not np.all(np.isfinite(ph[supp])):
        raise ValueError("potential must be finite on the kernel support")
    if not supp.any(axis=1).all():
        raise InfeasibleError("a source point with positive mass has no reachable target")
    if not supp.any(axis=0).all():
        raise InfeasibleError("a target point with positive mass has no reachable source")
    base = np.where(supp, lw - np.where(supp, ph, 0.0), -np.inf)
    log_mu = np.log(mu.weights[rows])
    log_nu = np.log(nu.weights[cols])

    if init is None:
        f = np.zeros(len(rows))
        g = np.zeros(len(cols))
    else:
        f = np.array(init.f, dtype=float)[rows]
        g = np.array(init.g, dtype=float)[cols]

    buf = np.empty_like(base)

    def form(out):
        np.subtract(base, f[:, None], out=out)
        out -= g[None, :]
        return out

    # normalizing constant of the initial plan goes into f
    f += logsumexp(form(buf))
    prev = np.exp(form(buf))

    mu_a = mu.weights[rows]
    nu_a = nu.weights[cols]
    tv = np.inf
    err = np.inf
    k = 0
    for k in range(1, max_iters + 1):
        if schedule == "gauss_seidel":
            f += logsumexp(form(buf), axis=1) - log_mu
            g += logsumexp(form(buf), axis=0) - log_nu
        else:
            form(buf)
            df = logsumexp(buf, axis=1) - log_mu
            dg = logsumexp(buf, axis=0) - log_nu
            f += df
            g += dg
            f += logsumexp(form(buf))
        cur = np.exp(form(buf))
        tv = 0.5 * float(np.abs(cur - prev).sum())
        prev = cur
        err = 0.5 * max(
            float(np.abs(cur.sum(axis=1) - mu_a).sum()),
            float(np.abs(cur.sum(axis=0) - nu_a).sum()),
        )
        if tv <= tol and err <= tol:
            break

    log_active = form(buf).copy()
    # gauge fixing; the leftover constant is c_P
    a = float(np.dot(mu.weights[rows], f))
    b = float(np.dot(nu.weights[cols], g))
    f -= a
    g -= b

    full_f = np.zeros(len(mu))
    full_g = np.zeros(len(nu))
    full_f[rows] = f
    full_g[cols] = g
    probs = np.zeros(phi.shape)
    probs[np.ix_(rows, cols)] = prev
    total = probs.sum()
    log_plan = np.full(phi.shape, -np.inf)
    log_plan[np.ix_(rows, cols)] = log_active - np.log(total)
    return InnerResult(
        plan=Coupling(mu, nu, probs / total),
        potentials=Potentials(full_f, full_g),
        iterations=k,
        final_step_tv=tv,
        log_constant=-(a + b),
        converged=tv <= tol and err <= tol,
        marginal_error=err,
        log_plan=log_plan,
    )


def optimality_gaps(result: InnerResult, kernel: ReferenceKernel, phi):
    """``h = phi + log P - log R + f ⊕ g`` and the plan mass, on the plan's support."""
    p = result.plan.probs
    if result.log_plan is not None:
        lp = result.log_plan
    else:
        with np.errstate(divide="ignore"):
            lp = np.log(p)
    pos = np.isfinite(lp) & np.isfinite(kernel.log_weights)
    phi = np.asarray(phi, dtype=float)
    h = (
        np.where(pos, phi, 0.0)
        + np.where(pos, lp, 0.0)
        - np.where(pos, kernel.log_weights, 0.0)
        + result.potentials.f[:, None]
        + result.potentials.g[None, :]
    )
    return h[pos], p[pos]


def first_order_residual(result: InnerResult, kernel: ReferenceKernel, phi) -> float:
    """Largest deviation of ``h`` from its median; 0 at an exact solution."""
    h, w = optimality_gaps(result, kernel, phi)
    return float(np.max(np.abs(h - _weighted_median(h, w))))
