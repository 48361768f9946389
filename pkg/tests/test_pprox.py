import numpy as np
import pytest

from proxboost.errors import NumericError
from proxboost.pprox import (
    ObjectiveFn,
    coordinate_mask_operator,
    edge_of,
    edge_operator,
    identity_operator,
    mask_operator,
    measure_edge,
    noisy_operator,
    prox_point_iterate,
    quadratic_objective,
    random_quadratic,
    rate_bound,
    verify_rate,
)

from oracles import golden_section


def test_half_norm_single_step():
    obj = quadratic_objective([1.0])
    x1, losses = prox_point_iterate(obj, identity_operator(), [2.0], 1.0, 1)
    np.testing.assert_allclose(x1, [1.0])
    np.testing.assert_allclose(losses, [2.0, 0.5])


def test_half_norm_loss_drops_fourfold():
    obj = quadratic_objective(np.ones(3))
    _, losses = prox_point_iterate(obj, identity_operator(), [2.0, -1.0, 4.0], 1.0, 10)
    np.testing.assert_allclose(losses[1:] / losses[:-1], 0.25)


def test_minimizer_is_fixed_point():
    obj = quadratic_objective([1.0, 3.0], center=[0.5, -2.0])
    x, losses = prox_point_iterate(obj, edge_operator(0.6), [0.5, -2.0], 0.3, 5)
    np.testing.assert_array_equal(x, [0.5, -2.0])
    assert np.all(losses == 0.0)


def test_quadratic_prox_minimizes():
    rng = np.random.default_rng(0)
    obj = random_quadratic(4, 0.5, 3.0, rng)
    for _ in range(20):
        z = rng.normal(size=4)
        lam = rng.uniform(0.1, 5)
        p = obj.prox(z, lam)
        # separable: check each coordinate with a scalar minimizer
        for i in range(4):
            def f(u):
                x = p.copy()
                x[i] = u
                return lam * obj.value(x) + 0.5 * np.sum((x - z) ** 2)
            assert golden_section(np.vectorize(f), z[i] - 50, z[i] + 50) == pytest.approx(p[i], abs=1e-6)


def test_exact_method_converges():
    rng = np.random.default_rng(1)
    obj = random_quadratic(30, 0.1, 10.0, rng)
    x, losses = prox_point_iterate(obj, identity_operator(), rng.normal(size=30) * 5, 1.0, 200)
    assert np.all(np.diff(losses) <= 0)
    np.testing.assert_allclose(x, obj.minimizer, atol=1e-8)


def test_verify_rate_examples():
    kappa = 2.0
    obj = quadratic_objective(np.full(5, kappa))
    _, losses = prox_point_iterate(obj, identity_operator(), np.ones(5), 1 / (8 * kappa), 100)
    assert verify_rate(losses, 1.0, kappa, kappa)
    assert verify_rate(np.zeros(10), 0.5, 1.0, 0.1)
    assert not verify_rate(np.arange(1.0, 6.0), 1.0, 1.0, 1.0)


def test_rate_bound_shape():
    b = rate_bound(2.0, 3, 1.0, 9.0, 1.0)
    np.testing.assert_allclose(b, 2.0 * (1 - 1 / 81) ** np.arange(4))


@pytest.mark.parametrize("zeta", [1.0, 0.8, 0.6])
def test_linear_rate_with_edge_operator(zeta):
    rng = np.random.default_rng(2)
    for _ in range(5):
        obj = random_quadratic(40, 0.2, 5.0, rng)
        edges = []
        _, losses = prox_point_iterate(obj, edge_operator(zeta), rng.normal(size=40),
                                       zeta ** 2 / (8 * obj.L), 200, edges)
        assert min(edges) >= zeta - 1e-9
        assert verify_rate(losses, zeta, obj.L, obj.kappa)
        assert np.all(np.diff(losses) <= 1e-15)


def test_mask_example_edge():
    P = mask_operator([True, False])
    np.testing.assert_array_equal(P([3.0, 4.0]), [3.0, 0.0])
    assert edge_of([3.0, 4.0], P([3.0, 4.0])) == pytest.approx(0.6)


def test_coordinate_mask_full_is_identity():
    P = coordinate_mask_operator(1.0, 5)
    g = np.random.default_rng(3).normal(size=17)
    np.testing.assert_array_equal(P(g), g)
    assert P.zeta == 1.0
    assert measure_edge(P, np.random.default_rng(4).normal(size=(10, 17))) == 1.0


def test_coordinate_mask_is_fixed_and_sized():
    P = coordinate_mask_operator(0.3, 7)
    g = np.ones(100)
    a, b = P(g), P(2 * g, 5)
    assert np.count_nonzero(a) == 30
    np.testing.assert_array_equal(a != 0, b != 0)


def test_declared_worst_case_below_each_probe():
    P = coordinate_mask_operator(0.5, 0)
    probes = np.random.default_rng(5).normal(size=(1000, 12))
    worst = measure_edge(P, probes)
    assert all(worst <= edge_of(g, P(g)) for g in probes)


def test_fixed_mask_loses_its_edge_along_iterates():
    # masked coordinates never move, so the direction concentrates on them
    rng = np.random.default_rng(6)
    obj = random_quadratic(20, 0.1, 1.0, rng)
    edges = []
    prox_point_iterate(obj, coordinate_mask_operator(0.5, 1), rng.normal(size=20), 0.5 / 8, 300, edges)
    assert edges[0] > 0.3 and edges[-1] < 0.05


def test_summable_errors_reach_minimum():
    rng = np.random.default_rng(7)
    obj = random_quadratic(20, 0.5, 2.0, rng)
    _, losses = prox_point_iterate(obj, noisy_operator(1.0, 3), rng.normal(size=20), 1.0, 500)
    assert losses[-1] - obj.minimum <= 1e-4


def test_keep_fraction_zero_rejected():
    with pytest.raises(ValueError):
        coordinate_mask_operator(0.0)
    with pytest.raises(ValueError):
        edge_operator(0.0)


def test_bad_arguments_and_nan():
    obj = quadratic_objective([1.0])
    with pytest.raises(ValueError):
        prox_point_iterate(obj, identity_operator(), [1.0], 0.0, 3)
    with pytest.raises(ValueError):
        prox_point_iterate(obj, identity_operator(), [1.0], 1.0, 0)
    bad = ObjectiveFn(lambda x: float("nan"), obj.prox)
    with pytest.raises(NumericError, match="step 1"):
        prox_point_iterate(bad, identity_operator(), [1.0], 1.0, 3)
