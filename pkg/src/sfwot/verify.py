"""
Self-check suite: randomized oracle comparisons plus a small UAV study.

Each check returns a :class:`CheckResult`; :func:`run_checks` runs them
all. The ``corrupt`` argument of :func:`run_checks` flips the sign of the
tilting identity, which must make ``tilting_identity`` fail.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .flow import SfwConfig, default_initial, dissipation_comparison, reference_run, run
from .functional import BoxPartition, CongestionSpec, QuadraticCongestion, derivative_check, zero_functional
from .inner import SCHEDULES, solve_inner
from .kernel import ReferenceKernel, tilting_identity_residual
from .measures import Coupling, DiscreteMeasure, total_variation
from .oracles import TwoByTwoInstance, inner_oracle_2x2, transport_entropy_check
from .uav import ScenarioConfig, build_scenario


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0


# -- random instances ------------------------------------------------------


def line_support(n, spacing=None):
    """``n`` points on the segment ``x in [0, 1]`` at time 0."""
    x = np.linspace(0.0, 1.0, n) if spacing is None else spacing * np.arange(n)
    return DiscreteMeasure(np.column_stack([np.zeros(n), x, np.zeros(n)]), np.full(n, 1.0 / n))


def random_kernel(rng, n, m, spread=2.0):
    mu = line_support(n)
    nu = line_support(m)
    lw = rng.uniform(-spread, spread, (n, m))
    return ReferenceKernel(mu, nu, lw - logsumexp(lw))


def random_probs(rng, shape, floor=0.0):
    p = rng.random(shape) + floor
    return p / p.sum()


def random_2x2(rng):
    return TwoByTwoInstance(
        mu1=rng.uniform(0.2, 0.8),
        nu1=rng.uniform(0.2, 0.8),
        log_kernel=rng.uniform(-2, 2, (2, 2)),
        phi=rng.uniform(-2, 2, (2, 2)),
    )


def small_pinsker_pair(rng):
    """Two random 2x2 couplings on a product space of diameter below 1.

    Points are drawn in a box of side 0.3. With small probability one
    entry of the first coupling is zeroed, or one entry of the second,
    so that singular pairs are exercised too.
    """
    def pts():
        return np.column_stack([np.zeros(2), rng.uniform(0, 0.3, 2), rng.uniform(0, 0.3, 2)])

    mu = DiscreteMeasure(pts(), [0.5, 0.5])
    nu = DiscreteMeasure(pts(), [0.5, 0.5])
    probs = [random_probs(rng, (2, 2)) for _ in range(2)]
    if rng.random() < 0.1:
        k = rng.integers(2)
        probs[k][rng.integers(2), rng.integers(2)] = 0.0
        probs[k] /= probs[k].sum()
    return Coupling(mu, nu, probs[0]), Coupling(mu, nu, probs[1])


def small_congestion(rng, n=4, m=5, gamma=3.0, cells=6, density=0.5):
    occ = sp.csr_matrix((rng.random((cells, n * m)) < density).astype(float))
    boxes = BoxPartition.uniform([[0, 1], [0, 1], [0, 1]], (1, 1, cells))
    return QuadraticCongestion(CongestionSpec(boxes, gamma, occ, (n, m)))


def desk_config(nx=20, ny=15, **kw) -> ScenarioConfig:
    return ScenarioConfig(nx=nx, ny=ny, **kw)


# -- checks ----------------------------------------------------------------


def check_tilting_identity(rng, trials=1000, tol=1e-12, sign=-1.0):
    worst = 0.0
    for _ in range(trials):
        k = random_kernel(rng, 5, 5)
        pi = Coupling(k.source, k.target, random_probs(rng, (5, 5)))
        phi = rng.uniform(-2, 2, (5, 5))
        worst = max(worst, tilting_identity_residual(pi, k, phi, _sign=sign))
    return CheckResult("tilting_identity", worst <= tol, {"trials": trials, "max_residual": worst, "tol": tol})


def check_inner_oracle(rng, trials=100, tol=1e-8):
    worst = {sched: 0.0 for sched in SCHEDULES}
    for _ in range(trials):
        inst = random_2x2(rng)
        exact = inner_oracle_2x2(inst)
        for sched in SCHEDULES:
            res = solve_inner(inst.kernel(), inst.phi, tol=1e-13, max_iters=100000, schedule=sched)
            worst[sched] = max(worst[sched], total_variation(res.plan, exact))
    ok = max(worst.values()) <= tol
    return CheckResult("inner_oracle", ok, {"trials": trials, "max_tv": worst, "tol": tol})


def vertex_direction(rng, mu, nu):
    """A point-mass coupling; moving toward it changes loads at order one."""
    z = np.zeros((len(mu), len(nu)))
    z[rng.integers(len(mu)), rng.integers(len(nu))] = 1.0
    return Coupling(mu, nu, z)


def check_derivative(rng, trials=20, rel_tol=1e-6):
    # a dense random direction barely moves the loads, and at eta=1e-4 the
    # residual then sinks under double-precision cancellation in F
    etas = (1e-2, 1e-3, 1e-4)
    worst = 0.0
    zero_max = 0.0
    for _ in range(trials):
        model = small_congestion(rng)
        mu, nu = line_support(4), line_support(5)
        p = Coupling(mu, nu, np.outer(mu.weights, nu.weights))
        q = vertex_direction(rng, mu, nu)
        ratios = np.array(derivative_check(model, p, q, etas)) / np.square(etas)
        if ratios.max() > 0:
            worst = max(worst, float((ratios.max() - ratios.min()) / ratios.max()))
        zero_max = max(zero_max, max(derivative_check(zero_functional(), p, q, etas)))
    ok = worst <= rel_tol and zero_max == 0.0
    return CheckResult("derivative_check", ok, {"trials": trials, "max_rel_spread": worst, "zero_max": zero_max})


def check_transport_entropy(rng, trials=1000):
    violations = 0
    worst_ratio = 0.0
    for _ in range(trials):
        p, q = small_pinsker_pair(rng)
        lhs, rhs, ok = transport_entropy_check(p, q)
        violations += not ok
        if np.isfinite(rhs) and rhs > 0:
            worst_ratio = max(worst_ratio, lhs / rhs)
    return CheckResult("transport_entropy", violations == 0, {"trials": trials, "violations": violations, "max_ratio": worst_ratio})


def _small_study(horizon_t=2.0, alphas=(0.01, 0.04)):
    sc = build_scenario(desk_config(nx=12, ny=9))
    P0 = default_initial(sc.kernel)
    v_star, _, _ = reference_run(P0, sc.kernel, sc.model)
    traces = {}
    for a in alphas:
        cfg = SfwConfig(alpha=a, max_outer=int(round(horizon_t / a)), outer_tol=0.0, v_ref=v_star)
        traces[a] = run(P0, sc.kernel, sc.model, cfg)[1]
    return v_star, traces


def check_dissipation_trend(study, min_fraction=0.9):
    _, traces = study
    a = sorted(traces)
    frac = dissipation_comparison(traces[a[0]], traces[a[-1]])
    return CheckResult("dissipation_trend", frac >= min_fraction, {"fraction": frac, "alphas": a})


def check_exponential_bound(study, slack=1.1, max_slope=-0.8):
    v_star, traces = study
    detail = {"v_star": v_star}
    ok = True
    for a, tr in sorted(traces.items()):
        g = tr.array("gap")
        t = tr.array("t")
        bound_ok = bool(np.all(g <= slack * g[0] * np.exp(-t)))
        slope = float(np.polyfit(t, np.log(g), 1)[0]) if np.all(g > 0) else math.nan
        ok &= bound_ok and slope <= max_slope
        detail[f"alpha={a}"] = {"bound_ok": bound_ok, "slope": slope}
    return CheckResult("exponential_bound", ok, detail)


def run_checks(seed=0, corrupt=None):
    """All checks in a fixed order; returns a list of :class:`CheckResult`."""
    results = []

    def timed(fn, *args, **kw):
        t0 = time.perf_counter()
        r = fn(*args, **kw)
        r.seconds = time.perf_counter() - t0
        results.append(r)

    sign = 1.0 if corrupt == "tilting_sign" else -1.0
    timed(check_tilting_identity, np.random.default_rng([seed, 1]), sign=sign)
    timed(check_inner_oracle, np.random.default_rng([seed, 2]))
    timed(check_derivative, np.random.default_rng([seed, 3]))
    timed(check_transport_entropy, np.random.default_rng([seed, 4]))
    t0 = time.perf_counter()
    study = _small_study()
    extra = time.perf_counter() - t0
    timed(check_dissipation_trend, study)
    timed(check_exponential_bound, study)
    results[-2].seconds += extra
    return results
