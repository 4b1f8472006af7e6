import numpy as np
import pytest

from sfwot.kernel import (
    InfeasibleError,
    ReferenceKernel,
    entropy_wrt_kernel,
    gibbs_reference,
    tilt,
    tilting_identity_residual,
)
from sfwot.measures import Coupling
from sfwot.verify import line_support, random_kernel, random_probs


def uniform(n):
    return line_support(n)


def test_zero_cost_gives_product():
    k = gibbs_reference(np.zeros((3, 4)), 0.5, uniform(3), uniform(4))
    np.testing.assert_allclose(np.exp(k.log_weights), 1 / 12, atol=1e-15)


def test_two_by_two_gibbs_values():
    k = gibbs_reference(np.array([[0.0, 1.0], [1.0, 0.0]]), 1.0, uniform(2), uniform(2))
    w = np.exp(k.log_weights)
    z = 2 * (1 + np.exp(-1))
    np.testing.assert_allclose(w, [[1 / z, np.exp(-1) / z], [np.exp(-1) / z, 1 / z]], rtol=1e-14)
    assert w[0, 0] == pytest.approx(0.36553, abs=1e-5)
    assert w[0, 1] == pytest.approx(0.13447, abs=1e-5)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)


def test_large_epsilon_tends_to_product(rng):
    cost = rng.uniform(0, 1, (3, 3))
    k = gibbs_reference(cost, 1e6, uniform(3), uniform(3))
    assert np.max(np.abs(np.exp(k.log_weights) - 1 / 9)) <= 1e-5


def test_cost_shift_invariance(rng):
    cost = rng.uniform(0, 1, (4, 3))
    a = gibbs_reference(cost, 0.3, uniform(4), uniform(3))
    b = gibbs_reference(cost + 7.0, 0.3, uniform(4), uniform(3))
    np.testing.assert_allclose(a.log_weights, b.log_weights, atol=1e-12)


def test_infinite_cost_leaves_support():
    cost = np.array([[0.0, np.inf], [1.0, 0.0]])
    k = gibbs_reference(cost, 1.0, uniform(2), uniform(2))
    assert k.log_weights[0, 1] == -np.inf
    np.testing.assert_array_equal(k.support, [[True, False], [True, True]])


def test_all_infinite_row_is_infeasible():
    with pytest.raises(InfeasibleError):
        gibbs_reference(np.array([[np.inf, np.inf], [0.0, 1.0]]), 1.0, uniform(2), uniform(2))


def test_log_partition_of_gibbs_kernel():
    cost = np.array([[0.0, 1.0], [2.0, 0.5]])
    k = gibbs_reference(cost, 0.5, uniform(2), uniform(2))
    assert k.log_partition == pytest.approx(np.log(np.sum(np.exp(-cost / 0.5)) / 4), rel=1e-14)


def test_kernel_mass_is_checked():
    with pytest.raises(ValueError):
        ReferenceKernel(uniform(2), uniform(2), np.log(np.full((2, 2), 0.3)))


def test_zero_tilt_is_identity(rng):
    k = random_kernel(rng, 3, 3)
    r = tilt(k, np.zeros((3, 3)))
    assert r.log_partition == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(r.kernel.log_weights, k.log_weights, atol=1e-15)


def test_constant_tilt(rng):
    k = random_kernel(rng, 3, 3)
    r = tilt(k, np.full((3, 3), 2.5))
    assert r.log_partition == pytest.approx(-2.5, abs=1e-14)
    np.testing.assert_allclose(r.kernel.log_weights, k.log_weights, atol=1e-14)


def test_tilts_compose(rng):
    k = random_kernel(rng, 4, 3)
    p1, p2 = rng.uniform(-2, 2, (2, 4, 3))
    two_step = tilt(tilt(k, p1).kernel, p2)
    one_step = tilt(k, p1 + p2)
    np.testing.assert_allclose(two_step.kernel.log_weights, one_step.kernel.log_weights, atol=1e-12)
    assert tilt(k, p1).log_partition + two_step.log_partition == pytest.approx(one_step.log_partition, abs=1e-12)


@pytest.mark.parametrize("n", [3, 4])
def test_tilting_identity_random(rng, n):
    for _ in range(50):
        k = random_kernel(rng, n, n)
        pi = Coupling(k.source, k.target, random_probs(rng, (n, n)))
        assert tilting_identity_residual(pi, k, rng.uniform(-3, 3, (n, n))) <= 1e-12


def test_tilting_identity_trivial_potentials(rng):
    k = random_kernel(rng, 3, 3)
    pi = Coupling(k.source, k.target, random_probs(rng, (3, 3)))
    assert tilting_identity_residual(pi, k, np.zeros((3, 3))) <= 1e-15
    assert tilting_identity_residual(pi, k, np.full((3, 3), -1.7)) <= 1e-14


def test_plus_log_z_sign_fails_for_constant_potential(rng):
    # with "+ log Z" the identity is off by 2c for phi = c
    k = random_kernel(rng, 3, 3)
    pi = Coupling(k.source, k.target, random_probs(rng, (3, 3)))
    assert tilting_identity_residual(pi, k, np.full((3, 3), 1.0), _sign=1.0) == pytest.approx(2.0, abs=1e-12)


def test_identity_outside_support_is_infinite():
    cost = np.array([[0.0, np.inf], [1.0, 0.0]])
    k = gibbs_reference(cost, 1.0, uniform(2), uniform(2))
    pi = Coupling(k.source, k.target, np.full((2, 2), 0.25))
    assert entropy_wrt_kernel(pi, k) == np.inf
    assert tilting_identity_residual(pi, k, np.zeros((2, 2))) == np.inf
