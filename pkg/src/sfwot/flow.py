"""
Outer Frank-Wolfe loop over couplings.

Each step linearizes the functional at the current plan, computes the
entropic best response on the tilted kernel, and moves a fraction ``alpha``
toward it. The energy minimized is ``V = H(pi || R) + F(pi) / epsilon``
(solver units), where ``epsilon`` is the kernel temperature; for a Gibbs
kernel this is the physical objective ``<c, pi> + F + eps H(pi || mu⊗nu)``
divided by ``epsilon`` and shifted by ``log Z``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .functional import FunctionalModel
from .inner import InnerResult, InnerSettings, Potentials, solve_inner
from .kernel import InfeasibleError, ReferenceKernel, entropy_wrt_kernel
from .measures import Coupling, DiscreteMeasure, _kl, convex_combine, total_variation

log = logging.getLogger(__name__)

#: Energy increase that triggers the divergence guard.
INCREASE_TOL = 1e-8

TRACE_COLUMNS = (
    "outer_iter", "t", "V_solver", "V_physical", "gap", "sym_entropy", "step_tv", "inner_iters", "F",
)


class SfwDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class SfwConfig:
    alpha: float = 0.02
    max_outer: int = 40
    outer_tol: float = 1e-4
    inner: InnerSettings = field(default_factory=InnerSettings)
    record_entropies: bool = True
    warm_start: bool = True
    v_ref: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if self.max_outer < 1:
            raise ValueError("max_outer must be positive")
        if not self.outer_tol >= 0:
            raise ValueError("outer_tol must be nonnegative")


@dataclass
class SfwTrace:
    """Per-step diagnostics; row ``s`` describes the plan ``P_s``.

    ``sym_entropy``, ``step_tv`` and ``inner_iters`` refer to the step
    taken from ``P_s`` and are NaN / 0 on the final row.
    """

    outer_iter: list = field(default_factory=list)
    t: list = field(default_factory=list)
    V_solver: list = field(default_factory=list)
    V_physical: list = field(default_factory=list)
    gap: list = field(default_factory=list)
    sym_entropy: list = field(default_factory=list)
    step_tv: list = field(default_factory=list)
    inner_iters: list = field(default_factory=list)
    F: list = field(default_factory=list)
    max_marginal_error: float = 0.0
    converged: bool = False
    stop_reason: str = ""
    alpha_halved: bool = False

    def __len__(self):
        return len(self.t)

    def array(self, name):
        return np.asarray(getattr(self, name), dtype=float)

    def with_reference(self, v_ref) -> SfwTrace:
        return replace(self, gap=[v - v_ref for v in self.V_solver])

    def rows(self):
        return [tuple(getattr(self, c)[k] for c in TRACE_COLUMNS) for k in range(len(self))]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for row in self.rows():
                w.writerow([v if isinstance(v, (int, np.integer)) else f"{v:.17g}" for v in row])


def energy(pi: Coupling, kernel: ReferenceKernel, model: FunctionalModel) -> float:
    """``H(pi || R) + F(pi) / epsilon``; ``inf`` if ``pi`` leaves the kernel support."""
    h = entropy_wrt_kernel(pi, kernel)
    if not np.isfinite(h):
        return np.inf
    return h + model.value(pi) / kernel.epsilon


def physical_energy(pi: Coupling, cost, epsilon, model: FunctionalModel, mu=None, nu=None) -> float:
    """``<c, pi> + F(pi) + epsilon * H(pi || mu ⊗ nu)``."""
    mu = pi.source if mu is None else mu
    nu = pi.target if nu is None else nu
    p = pi.probs
    pos = p > 0
    c = np.asarray(cost, dtype=float)
    if np.any(~np.isfinite(c[pos])):
        return np.inf
    prod = np.outer(mu.weights, nu.weights)
    return float(np.sum(c[pos] * p[pos])) + model.value(pi) + epsilon * _kl(p, prod)


def solver_to_physical(v_solver, kernel: ReferenceKernel) -> float:
    return kernel.epsilon * (v_solver - kernel.log_partition)


def symmetric_entropy(p: Coupling, q: Coupling, log_p=None, log_q=None) -> float:
    """``H(p || q) + H(q || p) = sum (p - q)(log p - log q)``.

    Log-masses may be supplied to avoid underflow in entries that are
    positive but below the smallest double.
    """
    with np.errstate(divide="ignore"):
        lp = np.log(p.probs) if log_p is None else log_p
        lq = np.log(q.probs) if log_q is None else log_q
    fp, fq = np.isfinite(lp), np.isfinite(lq)
    if np.any(fp != fq):
        return np.inf
    return max(float(np.sum((p.probs[fp] - q.probs[fp]) * (lp[fp] - lq[fp]))), 0.0)


def default_initial(kernel: ReferenceKernel, mu: DiscreteMeasure | None = None, nu: DiscreteMeasure | None = None) -> Coupling:
    """``mu ⊗ nu``, projected back onto the marginals if the kernel drops pairs."""
    mu = kernel.source if mu is None else mu
    nu = kernel.target if nu is None else nu
    prod = np.outer(mu.weights, nu.weights)
    mass = prod > 0
    if np.all(kernel.support[mass]):
        return Coupling(mu, nu, prod)
    restricted = np.where(kernel.support, prod, 0.0)
    if restricted.sum() <= 0:
        raise InfeasibleError("kernel support carries no product mass")
    with np.errstate(divide="ignore"):
        lw = np.log(restricted / restricted.sum())
    proj = ReferenceKernel(mu, nu, lw)
    res = solve_inner(proj, np.zeros(prod.shape), mu, nu, tol=1e-14, max_iters=100000)
    return res.plan


def _phi(model, pi, kernel):
    return model.linear_derivative(pi) / kernel.epsilon


def _marginal_error(p, mu, nu):
    return max(
        float(np.abs(p.probs.sum(axis=1) - mu.weights).sum()),
        float(np.abs(p.probs.sum(axis=0) - nu.weights).sum()),
    )


def run(P0: Coupling, kernel: ReferenceKernel, model: FunctionalModel, config: SfwConfig = SfwConfig(), callback=None):
    """Sinkhorn-Frank-Wolfe iteration ``P <- (1 - alpha) P + alpha T(P)``.

    Returns ``(final, trace)``. ``callback(s, P_s, inner_result)`` is
    invoked after each inner solve if given.
    """
    mu, nu = kernel.source, kernel.target
    alpha = config.alpha
    inner = config.inner
    trace = SfwTrace()
    P = P0
    V = energy(P, kernel, model)
    if not np.isfinite(V):
        raise InfeasibleError("initial coupling is not absolutely continuous w.r.t. the kernel")
    t = 0.0
    # t = t_anchor + k * alpha, so times stay exact multiples of the step size
    t_anchor, k = 0.0, 0
    pots: Potentials | None = None
    trace.max_marginal_error = _marginal_error(P, mu, nu)

    def record(s, P, V, F):
        trace.outer_iter.append(s)
        trace.t.append(t)
        trace.V_solver.append(V)
        trace.V_physical.append(solver_to_physical(V, kernel))
        trace.gap.append(V - config.v_ref if config.v_ref is not None else math.nan)
        trace.F.append(F)

    F = model.value(P)
    for s in range(config.max_outer):
        record(s, P, V, F)
        phi = _phi(model, P, kernel)
        res: InnerResult = solve_inner(
            kernel, phi, mu, nu,
            tol=inner.tol, max_iters=inner.max_iters, schedule=inner.schedule,
            init=pots if config.warm_start else None,
        )
        pots = res.potentials
        P_hat = res.plan
        if callback is not None:
            callback(s, P, res)
        trace.sym_entropy.append(symmetric_entropy(P_hat, P, log_p=res.log_plan) if config.record_entropies else math.nan)
        trace.inner_iters.append(res.iterations)

        P_new = convex_combine(P, P_hat, alpha)
        V_new = energy(P_new, kernel, model)
        if not np.isfinite(V_new):
            raise FloatingPointError(
                f"energy became {V_new} at outer step {s}; last rows: "
                f"V={trace.V_solver[-3:]}, step_tv={trace.step_tv[-3:]}"
            )
        if V_new > V + INCREASE_TOL:
            if trace.alpha_halved:
                raise SfwDivergence(f"energy increased twice (step {s}: {V!r} -> {V_new!r})")
            log.warning("energy increased at step %d; halving alpha to %g", s, alpha / 2)
            t_anchor, k = t, 0
            alpha /= 2
            trace.alpha_halved = True
            P_new = convex_combine(P, P_hat, alpha)
            V_new = energy(P_new, kernel, model)

        step = total_variation(P_new, P)
        trace.step_tv.append(step)
        P, V = P_new, V_new
        F = model.value(P)
        k += 1
        t = t_anchor + k * alpha
        trace.max_marginal_error = max(trace.max_marginal_error, _marginal_error(P, mu, nu))
        if step <= config.outer_tol:
            trace.converged = True
            trace.stop_reason = "outer_tol"
            break
    else:
        trace.stop_reason = "max_outer"

    record(len(trace.t), P, V, F)
    trace.sym_entropy.append(math.nan)
    trace.step_tv.append(math.nan)
    trace.inner_iters.append(0)
    return P, trace


def dissipation_residual(trace: SfwTrace) -> np.ndarray:
    """``|(V_{s+1} - V_s) / dt + H(P̂_s||P_s) + H(P_s||P̂_s)|`` per step."""
    V = trace.array("V_solver")
    t = trace.array("t")
    D = trace.array("sym_entropy")[:-1]
    return np.abs(np.diff(V) / np.diff(t) + D)


def estimate_v_star(trace: SfwTrace) -> float:
    """Smallest recorded energy minus a geometric extrapolation of the remaining decrease."""
    V = trace.array("V_solver")
    v_min = float(V.min())
    if len(V) < 3:
        return v_min
    d0 = V[-3] - V[-2]
    d1 = V[-2] - V[-1]
    if 0 < d1 < d0:
        rho = d1 / d0
        return v_min - d1 * rho / (1.0 - rho)
    return v_min


def reference_run(P0, kernel, model, alpha=0.04, max_outer=400, inner_tol=1e-8, inner_max_iters=2000):
    """High-accuracy run used to estimate ``V_*``; returns ``(v_star, final, trace)``."""
    cfg = SfwConfig(
        alpha=alpha, max_outer=max_outer, outer_tol=0.0,
        inner=InnerSettings(tol=inner_tol, max_iters=inner_max_iters),
    )
    final, trace = run(P0, kernel, model, cfg)
    return estimate_v_star(trace), final, trace


def _at(t_query, trace: SfwTrace, values):
    return np.interp(t_query, trace.array("t")[: len(values)], values, left=np.nan, right=np.nan)


def dissipation_comparison(fine: SfwTrace, coarse: SfwTrace) -> float:
    """Fraction of the coarse run's steps where the finer run has the smaller residual.

    Residuals are compared at the coarse step start times, interpolating the
    finer run linearly in ``t`` when the grids do not nest.
    """
    rc = dissipation_residual(coarse)
    rf = dissipation_residual(fine)
    tc = coarse.array("t")[: len(rc)]
    rf_at = _at(tc, fine, rf)
    ok = np.isfinite(rf_at) & np.isfinite(rc)
    if not ok.any():
        return math.nan
    return float(np.mean(rf_at[ok] < rc[ok]))


def log_gap(trace: SfwTrace) -> np.ndarray:
    """``log(gap(t) / gap(0))``; NaN where the gap is not positive."""
    g = trace.array("gap")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(g > 0, np.log(g / g[0]), np.nan)


def collapse_deviation(traces: dict, warmup_steps: int = 5):
    """Pairwise relative deviation of log-gap curves at matched ``t``.

    ``traces`` maps alpha to a trace carrying gaps. Curves are compared on
    the coarser grid of each pair for ``t >= warmup_steps * max(alpha)``,
    relative to the finer curve. Returns ``(max deviation, per-pair dict)``.
    """
    alphas = sorted(traces)
    t0 = warmup_steps * alphas[-1]
    pairs = {}
    for i, a in enumerate(alphas):
        for b in alphas[i + 1:]:
            fine, coarse = traces[a], traces[b]
            tc = coarse.array("t")
            sel = tc >= t0 - 1e-12
            lc = log_gap(coarse)[sel]
            lf = np.interp(tc[sel], fine.array("t"), log_gap(fine), left=np.nan, right=np.nan)
            with np.errstate(divide="ignore", invalid="ignore"):
                dev = np.abs(lc - lf) / np.abs(lf)
            dev = dev[np.isfinite(lc) & np.isfinite(lf)]
            pairs[(a, b)] = float(dev.max()) if len(dev) else math.nan
    finite = [v for v in pairs.values() if np.isfinite(v)]
    worst = max(finite) if finite else (0.0 if not pairs else math.nan)
    return worst, pairs
