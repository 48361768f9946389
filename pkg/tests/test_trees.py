import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from proxboost.errors import DataError
from proxboost.trees import RegressionTree, fit_tree, presort

from oracles import brute_force_best_split


def sse(tree, X, r):
    return float(np.sum((tree.predict(X) - r) ** 2))


def test_depth_one_split_example():
    X = np.array([[0.0], [1.0]])
    tree = fit_tree(X, [0.0, 1.0], max_depth=1)
    assert tree.leaf_count == 2
    assert tree.threshold[0] == 0.5 and tree.feature[0] == 0
    np.testing.assert_array_equal(tree.value[tree.leaves], [0.0, 1.0])


def test_constant_residual_gives_single_leaf():
    X = np.random.default_rng(0).normal(size=(10, 3))
    tree = fit_tree(X, np.full(10, 2.5), max_depth=4)
    assert tree.leaf_count == 1 and tree.depth == 0
    np.testing.assert_array_equal(tree.predict(X), np.full(10, 2.5))


def test_step_function_fit_at_depth_one():
    X = np.array([[0.0], [1], [2], [3]])
    tree = fit_tree(X, [0, 0, 1, 1], max_depth=3)
    assert tree.depth == 1
    assert tree.threshold[0] == 1.5
    assert sse(tree, X, np.array([0, 0, 1, 1.0])) == 0.0


def test_root_split_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(20):
        X = rng.integers(0, 6, size=(25, 3)).astype(float)
        r = rng.normal(size=25)
        tree = fit_tree(X, r, max_depth=1)
        best_sse, j, thr = brute_force_best_split(X, r)
        assert sse(tree, X, r) == pytest.approx(best_sse, rel=1e-10)
        assert (tree.feature[0], tree.threshold[0]) == (j, thr)


def test_min_samples_leaf_respected():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(40, 2))
    r = rng.normal(size=40)
    tree = fit_tree(X, r, max_depth=6, min_samples_leaf=5)
    counts = np.bincount(tree.apply(X), minlength=tree.n_nodes)[tree.leaves]
    assert counts.min() >= 5
    best_sse, j, thr = brute_force_best_split(X, r, min_leaf=5)
    assert (tree.feature[0], tree.threshold[0]) == (j, thr)


def test_tie_break_lowest_feature_then_smallest_threshold():
    # both columns separate the data identically
    X = np.array([[0.0, 0.0], [1, 1], [2, 2], [3, 3]])
    tree = fit_tree(X, [0, 0, 1, 1.0], max_depth=1)
    assert tree.feature[0] == 0
    # residual symmetric around the middle: thresholds 0.5 and 2.5 tie
    X1 = np.array([[0.0], [1], [2], [3]])
    tree = fit_tree(X1, [1.0, 0, 0, 1], max_depth=1)
    assert tree.threshold[0] == 0.5


def test_predict_boundary_goes_left():
    tree = fit_tree(np.array([[0.0], [1.0]]), [0.0, 1.0], max_depth=1)
    assert tree.predict([[0.4]])[0] == 0.0
    assert tree.predict([[0.5]])[0] == 0.0
    assert tree.predict([[0.6]])[0] == 1.0


def test_assign_leaves_routes_like_predict():
    tree = fit_tree(np.array([[0.0], [1.0]]), [0.0, 1.0], max_depth=1)
    Xq = np.array([[-3.0], [0.5], [0.51]])
    leaves = tree.apply(Xq)
    left, right = tree.left[0], tree.right[0]
    np.testing.assert_array_equal(leaves, [left, left, right])
    np.testing.assert_array_equal(tree.value[leaves], tree.predict(Xq))


def test_single_leaf_tree_predicts_constant():
    tree = RegressionTree.constant(2.0)
    np.testing.assert_array_equal(tree.predict(np.zeros((3, 4))), [2.0, 2.0, 2.0])


def test_deep_tree_interpolates_distinct_rows():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(64, 3))
    r = rng.normal(size=64)
    # greedy splits may peel single points, so only depth n - 1 is unlimited
    tree = fit_tree(X, r, max_depth=63)
    np.testing.assert_allclose(tree.predict(X), r, atol=1e-12)


def test_sse_monotone_in_depth():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(200, 5))
    r = np.sin(X[:, 0]) + X[:, 1] ** 2 + rng.normal(scale=0.1, size=200)
    total = float(np.sum((r - r.mean()) ** 2))
    errors = [sse(fit_tree(X, r, max_depth=d), X, r) for d in range(1, 7)]
    assert errors[0] <= total
    assert all(b <= a + 1e-9 for a, b in zip(errors, errors[1:]))


@settings(max_examples=40, deadline=None)
@given(c=st.floats(0.01, 100) | st.floats(-100, -0.01),
       seed=st.integers(0, 10_000))
def test_scale_equivariance(c, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 4))
    r = rng.normal(size=60)
    a = fit_tree(X, r, max_depth=3)
    b = fit_tree(X, c * r, max_depth=3)
    np.testing.assert_array_equal(a.feature, b.feature)
    np.testing.assert_array_equal(a.threshold, b.threshold)
    np.testing.assert_allclose(b.value, c * a.value, rtol=1e-10, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(X=arrays(np.float64, (30, 2), elements=st.floats(-5, 5)),
       r=arrays(np.float64, 30, elements=st.floats(-5, 5)))
def test_apply_and_predict_agree(X, r):
    tree = fit_tree(X, r, max_depth=4)
    np.testing.assert_array_equal(tree.value[tree.apply(X)], tree.predict(X))
    assert tree.depth <= 4
    assert np.all(tree.is_leaf[tree.apply(X)])
    inner = ~tree.is_leaf
    assert np.all(tree.left[inner] >= 0) and np.all(tree.right[inner] >= 0)


def test_presorted_order_gives_same_tree():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(50, 3))
    r = rng.normal(size=50)
    a = fit_tree(X, r, max_depth=3)
    b = fit_tree(X, r, max_depth=3, order=presort(X))
    assert a.to_dict() == b.to_dict()


def test_json_roundtrip():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(30, 2))
    tree = fit_tree(X, rng.normal(size=30), max_depth=3)
    again = RegressionTree.from_dict(tree.to_dict())
    np.testing.assert_array_equal(again.predict(X), tree.predict(X))
    assert again.to_dict() == tree.to_dict()


def test_empty_input_rejected():
    with pytest.raises(DataError):
        fit_tree(np.zeros((0, 2)), np.zeros(0), max_depth=2)
    with pytest.raises(DataError):
        fit_tree(np.zeros((3, 2)), np.zeros(2), max_depth=2)
