import numpy as np
import pytest

from sfwot.inner import solve_inner
from sfwot.kernel import gibbs_reference
from sfwot.measures import Coupling, DiscreteMeasure, relative_entropy, total_variation
from sfwot.oracles import (
    OracleRefusal,
    TwoByTwoInstance,
    inner_oracle_2x2,
    sinkhorn_eot,
    transport_entropy_check,
    wasserstein1_exact_small,
)
from sfwot.verify import check_inner_oracle, line_support, random_2x2, small_pinsker_pair


def point(x, t=0.0, y=0.0):
    return [t, x, y]


class TestInnerOracle:
    def test_uniform(self):
        inst = TwoByTwoInstance(0.5, 0.5, np.zeros((2, 2)), np.zeros((2, 2)))
        np.testing.assert_allclose(inner_oracle_2x2(inst).probs, 0.25, atol=1e-14)

    def test_symmetric_closed_form(self):
        inst = TwoByTwoInstance(0.5, 0.5, np.zeros((2, 2)), np.array([[0.0, 1.0], [1.0, 0.0]]))
        a = inner_oracle_2x2(inst).probs[0, 0]
        assert a == pytest.approx(1 / (2 * (1 + np.exp(-1))), abs=1e-13)
        assert a == pytest.approx(0.36552, abs=1e-5)

    def test_strong_diagonal_penalty(self):
        inst = TwoByTwoInstance(0.5, 0.5, np.zeros((2, 2)), np.array([[10.0, 0.0], [0.0, 10.0]]))
        assert inner_oracle_2x2(inst).probs[0, 0] < 0.05

    def test_minimizes_objective(self, rng):
        for _ in range(20):
            inst = random_2x2(rng)
            th = inner_oracle_2x2(inst).probs[0, 0]
            lo, hi = inst.interval
            for other in np.linspace(lo, hi, 41)[1:-1]:
                assert inst.objective(th) <= inst.objective(other) + 1e-14

    def test_degenerate_interval(self):
        inst = TwoByTwoInstance(0.5, 0.5, np.zeros((2, 2)), np.zeros((2, 2)))
        object.__setattr__(inst, "nu1", 1.0)  # bypass validation: single feasible coupling
        np.testing.assert_allclose(inner_oracle_2x2(inst).probs, [[0.5, 0.0], [0.5, 0.0]])

    def test_agrees_with_solver(self, rng):
        r = check_inner_oracle(rng, trials=100)
        assert r.passed, r.detail


class TestWasserstein:
    def test_identical(self, rng):
        m = DiscreteMeasure([point(0.1), point(0.7), point(0.3, y=0.5)], [0.2, 0.5, 0.3])
        assert wasserstein1_exact_small(m, m) == pytest.approx(0.0, abs=1e-12)

    def test_two_point_masses(self):
        p = DiscreteMeasure([point(0.1, y=0.2)], [1.0])
        q = DiscreteMeasure([point(0.4, y=0.6)], [1.0])
        assert wasserstein1_exact_small(p, q) == pytest.approx(0.5, abs=1e-12)

    def test_split_mass(self):
        p = DiscreteMeasure([point(0.0), point(1.0)], [0.5, 0.5])
        q = DiscreteMeasure([point(0.5)], [1.0])
        assert wasserstein1_exact_small(p, q) == pytest.approx(0.5, abs=1e-12)

    def test_time_is_part_of_the_metric(self):
        p = DiscreteMeasure([point(0.0, t=0.0)], [1.0])
        q = DiscreteMeasure([point(0.0, t=0.3)], [1.0])
        assert wasserstein1_exact_small(p, q) == pytest.approx(0.3, abs=1e-12)

    def test_refusal(self):
        m = line_support(5)
        with pytest.raises(OracleRefusal):
            wasserstein1_exact_small(m, m)

    def test_metric_axioms(self, rng):
        def rand():
            pts = np.column_stack([np.zeros(2), rng.uniform(0, 1, (2, 2))])
            return DiscreteMeasure(pts, rng.dirichlet([1, 1]))

        for _ in range(30):
            a, b, c = rand(), rand(), rand()
            ab, ba = wasserstein1_exact_small(a, b), wasserstein1_exact_small(b, a)
            assert ab == pytest.approx(ba, abs=1e-12)
            assert ab <= wasserstein1_exact_small(a, c) + wasserstein1_exact_small(c, b) + 1e-12


class TestTransportEntropy:
    def test_identical(self, rng):
        p, _ = small_pinsker_pair(rng)
        lhs, rhs, ok = transport_entropy_check(p, p)
        assert lhs == pytest.approx(0.0, abs=1e-12) and rhs == 0.0 and ok

    def test_singular(self):
        mu = line_support(2)
        p = Coupling(mu, mu, [[0.5, 0.0], [0.0, 0.5]])
        q = Coupling(mu, mu, [[0.0, 0.5], [0.5, 0.0]])
        lhs, rhs, ok = transport_entropy_check(p, q)
        assert rhs == np.inf and ok and lhs > 0

    def test_large_diameter_uses_scaled_constant(self):
        # product space of diameter 2: 2^{-1/2} alone would not bound W1
        far = DiscreteMeasure([[0, 0, 0], [2.0, 0, 0]], [0.5, 0.5])
        p = Coupling(far, far, [[0.5 - 1e-3, 1e-3], [1e-3, 0.5 - 1e-3]])
        q = Coupling(far, far, [[1e-3, 0.5 - 1e-3], [0.5 - 1e-3, 1e-3]])
        lhs, rhs, ok = transport_entropy_check(p, q)
        assert ok and lhs <= rhs

    def test_random_pairs_on_unit_diameter(self, rng):
        for _ in range(200):
            p, q = small_pinsker_pair(rng)
            lhs, rhs, ok = transport_entropy_check(p, q)
            assert ok
            assert lhs <= np.sqrt(relative_entropy(p, q) / 2) * (1 + 1e-9)


class TestSinkhornReference:
    def test_matches_log_domain_solver(self, rng):
        cost = rng.uniform(0, 1, (4, 6))
        mu = DiscreteMeasure(line_support(4).points, rng.dirichlet(np.ones(4)))
        nu = DiscreteMeasure(line_support(6).points, rng.dirichlet(np.ones(6)))
        k = gibbs_reference(cost, 0.2, mu, nu)
        a = solve_inner(k, np.zeros((4, 6)), tol=1e-13, max_iters=100000).plan
        b = sinkhorn_eot(cost, 0.2, mu, nu)
        assert total_variation(a, b) <= 1e-10

    def test_handles_forbidden_pairs(self):
        cost = np.array([[0.0, np.inf], [0.3, 0.0]])
        p = sinkhorn_eot(cost, 0.5, line_support(2), line_support(2))
        assert p.probs[0, 1] == 0.0
