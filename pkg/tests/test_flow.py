import numpy as np
import pytest

from sfwot.flow import (
    TRACE_COLUMNS,
    SfwConfig,
    SfwDivergence,
    collapse_deviation,
    default_initial,
    dissipation_residual,
    energy,
    estimate_v_star,
    physical_energy,
    run,
    solver_to_physical,
    symmetric_entropy,
)
from sfwot.functional import LinearFunctional, zero_functional
from sfwot.inner import InnerSettings, solve_inner
from sfwot.kernel import gibbs_reference
from sfwot.measures import Coupling, marginal_error, relative_entropy, total_variation
from sfwot.oracles import TwoByTwoInstance, fixed_point_residual, inner_oracle_2x2
from sfwot.verify import line_support, random_probs, small_congestion

TIGHT = InnerSettings(tol=1e-12, max_iters=100000)


def random_gibbs(rng, n=4, m=5, eps=0.5):
    return gibbs_reference(rng.uniform(0, 1, (n, m)), eps, line_support(n), line_support(m))


class TestEnergy:
    def test_kernel_itself_has_zero_energy(self, rng):
        k = random_gibbs(rng)
        assert energy(k.as_coupling(), k, zero_functional()) == pytest.approx(0.0, abs=1e-14)

    def test_product_plan_against_gibbs(self, rng):
        cost = rng.uniform(0, 1, (4, 5))
        k = gibbs_reference(cost, 0.5, line_support(4), line_support(5))
        prod = Coupling.product(k.source, k.target)
        expected = np.sum(cost * prod.probs) / 0.5 + k.log_partition
        assert energy(prod, k, zero_functional()) == pytest.approx(expected, rel=1e-13)

    def test_linear_functional_minimum(self):
        inst = TwoByTwoInstance(0.5, 0.5, np.zeros((2, 2)), np.array([[0.0, 1.0], [1.0, 0.0]]))
        k = inst.kernel()
        v = energy(inner_oracle_2x2(inst), k, LinearFunctional(inst.phi))
        assert v == pytest.approx(0.3800, abs=1e-3)

    def test_absolute_continuity_failure(self):
        k = gibbs_reference(np.array([[0.0, np.inf], [0.0, 0.0]]), 1.0, line_support(2), line_support(2))
        assert energy(Coupling(k.source, k.target, np.full((2, 2), 0.25)), k, zero_functional()) == np.inf


class TestPhysicalEnergy:
    def test_product_plan_without_functional(self, rng):
        cost = rng.uniform(0, 1, (3, 4))
        mu, nu = line_support(3), line_support(4)
        prod = Coupling.product(mu, nu)
        assert physical_energy(prod, cost, 0.3, zero_functional()) == pytest.approx(np.sum(cost * prod.probs), rel=1e-14)

    def test_consistency_with_solver_units(self, rng):
        cost = rng.uniform(0, 1, (4, 5))
        eps = 0.3
        k = gibbs_reference(cost, eps, line_support(4), line_support(5))
        model = small_congestion(rng)
        for _ in range(20):
            pi = Coupling(k.source, k.target, random_probs(rng, (4, 5)))
            phys = physical_energy(pi, cost, eps, model)
            assert phys - eps * energy(pi, k, model) + eps * k.log_partition == pytest.approx(0.0, abs=1e-10)
            assert solver_to_physical(energy(pi, k, model), k) == pytest.approx(phys, abs=1e-10)


class TestRun:
    def test_zero_functional_one_full_step(self, rng):
        k = random_gibbs(rng)
        P0 = default_initial(k)
        cfg = SfwConfig(alpha=1.0, max_outer=5, outer_tol=0.0, inner=TIGHT)
        final, trace = run(P0, k, zero_functional(), cfg)
        plan = solve_inner(k, np.zeros(k.log_weights.shape), tol=1e-12, max_iters=100000).plan
        assert total_variation(final, plan) <= 1e-10
        assert max(trace.step_tv[1:-1]) <= 1e-10
        assert trace.V_solver[-1] == pytest.approx(energy(plan, k, zero_functional()), abs=1e-10)

    def test_fixed_point_has_no_dissipation(self, rng):
        k = random_gibbs(rng)
        cfg = SfwConfig(alpha=0.5, max_outer=60, outer_tol=0.0, inner=TIGHT)
        _, trace = run(default_initial(k), k, zero_functional(), cfg)
        assert dissipation_residual(trace)[-1] <= 1e-10

    def test_trace_invariants(self, rng):
        k = random_gibbs(rng)
        model = small_congestion(rng)
        _, trace = run(default_initial(k), k, model, SfwConfig(alpha=0.1, max_outer=15, outer_tol=0.0))
        t = trace.array("t")
        assert np.all(np.diff(t) > 0)
        np.testing.assert_allclose(t, 0.1 * np.arange(len(t)), rtol=0, atol=1e-15)
        assert np.all(np.isfinite(trace.array("V_solver")))
        assert np.all(np.diff(trace.array("V_solver")) <= 1e-12)
        assert len(trace) == 16 and trace.stop_reason == "max_outer" and not trace.converged

    def test_stops_on_outer_tol(self, rng):
        k = random_gibbs(rng)
        _, trace = run(default_initial(k), k, zero_functional(), SfwConfig(alpha=0.5, max_outer=500, outer_tol=1e-6))
        assert trace.converged and trace.stop_reason == "outer_tol"
        assert trace.step_tv[-2] <= 1e-6

    def test_feasible_iterates(self, rng):
        k = random_gibbs(rng)
        model = small_congestion(rng)
        inner_worst = [0.0]

        def check(s, P, res):
            # P_s mixes earlier best responses, so it is no less feasible than the worst of them
            assert marginal_error(P) <= max(1e-12, inner_worst[0]) + 1e-15
            inner_worst[0] = max(inner_worst[0], marginal_error(res.plan))

        run(default_initial(k), k, model, SfwConfig(alpha=0.2, max_outer=10), callback=check)

    def test_divergence_guard(self, rng):
        k = random_gibbs(rng)
        base = small_congestion(rng, gamma=50.0)

        class Reversed:
            def value(self, pi):
                return base.value(pi)

            def linear_derivative(self, pi):
                return -base.linear_derivative(pi)

        P0 = Coupling(k.source, k.target, solve_inner(k, base.linear_derivative(default_initial(k)), tol=1e-12, max_iters=10000).plan.probs)
        with pytest.raises(SfwDivergence):
            run(P0, k, Reversed(), SfwConfig(alpha=1.0, max_outer=50, outer_tol=0.0, inner=TIGHT))

    def test_csv_columns(self, rng, tmp_path):
        k = random_gibbs(rng)
        _, trace = run(default_initial(k), k, zero_functional(), SfwConfig(alpha=0.5, max_outer=3, v_ref=0.0))
        trace.write_csv(tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert tuple(lines[0].split(",")) == TRACE_COLUMNS
        assert len(lines) == len(trace) + 1
        v = lines[1].split(",")[2]
        assert float(v) == trace.V_solver[0]


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
def test_config_alpha_domain(alpha):
    with pytest.raises(ValueError):
        SfwConfig(alpha=alpha)


class TestDefaultInitial:
    def test_full_support_gives_product(self, rng):
        k = random_gibbs(rng)
        np.testing.assert_array_equal(default_initial(k).probs, np.outer(k.source.weights, k.target.weights))

    def test_restricted_support_is_repaired(self):
        cost = np.array([[0.0, np.inf, 0.3], [0.2, 0.1, np.inf], [0.5, 0.0, 0.0]])
        k = gibbs_reference(cost, 0.5, line_support(3), line_support(3))
        P = default_initial(k)
        assert marginal_error(P) <= 1e-10
        assert np.all(P.probs[~k.support] == 0)

    def test_density_bounds_on_uav(self, desk):
        P = default_initial(desk.kernel)
        on = P.probs > 0
        ratio = np.log(P.probs[on]) - desk.kernel.log_weights[on]
        assert np.all(np.isfinite(ratio))


def test_symmetric_entropy(rng):
    mu, nu = line_support(3), line_support(3)
    p, q = (Coupling(mu, nu, random_probs(rng, (3, 3))) for _ in range(2))
    assert symmetric_entropy(p, q) == pytest.approx(relative_entropy(p, q) + relative_entropy(q, p), rel=1e-12)
    z = np.eye(3) / 3
    assert symmetric_entropy(Coupling(mu, nu, z), p) == np.inf


def test_estimate_v_star_on_geometric_sequence():
    from sfwot.flow import SfwTrace

    tr = SfwTrace(V_solver=[1 + 0.5**k for k in range(10)])
    assert estimate_v_star(tr) == pytest.approx(1.0, abs=1e-12)


def test_collapse_of_identical_curves():
    from sfwot.flow import SfwTrace

    def trace(a):
        t = a * np.arange(int(round(1 / a)) + 1)
        return SfwTrace(t=list(t), gap=list(np.exp(-t)))

    worst, pairs = collapse_deviation({0.1: trace(0.1), 0.05: trace(0.05)})
    assert worst == pytest.approx(0.0, abs=1e-3)
    assert set(pairs) == {(0.05, 0.1)}


class TestFixedPoint:
    def test_zero_functional_at_entropic_plan(self, rng):
        k = random_gibbs(rng)
        plan = solve_inner(k, np.zeros(k.log_weights.shape), tol=1e-12, max_iters=100000).plan
        assert fixed_point_residual(plan, k, zero_functional(), tol=1e-4) <= 1e-4

    def test_uav_run_and_perturbation(self, desk):
        cfg = SfwConfig(alpha=0.04, max_outer=3000, outer_tol=1e-6, inner=InnerSettings(1e-8, 2000))
        final, trace = run(default_initial(desk.kernel), desk.kernel, desk.model, cfg)
        assert trace.converged
        r = fixed_point_residual(final, desk.kernel, desk.model, tol=1e-8, max_iters=2000)
        assert r <= 1e-3
        mixed = Coupling(final.source, final.target, 0.9 * final.probs + 0.1 * np.outer(final.source.weights, final.target.weights))
        assert fixed_point_residual(mixed, desk.kernel, desk.model, tol=1e-8, max_iters=2000) > r


def test_entropy_gap_sandwich(desk, desk_reference):
    v_star, pi_star, _ = desk_reference
    entropies = []
    cfg = SfwConfig(alpha=0.02, max_outer=100, outer_tol=0.0, v_ref=v_star)
    _, trace = run(default_initial(desk.kernel), desk.kernel, desk.model, cfg,
                   callback=lambda s, P, r: entropies.append(relative_entropy(P, pi_star)))
    gap = trace.array("gap")[: len(entropies)]
    assert np.all(np.array(entropies) <= gap + 0.05 * gap[0])
