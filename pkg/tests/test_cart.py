import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from medalforest.cart import DecisionTree, TreeParams, best_split, fit_tree, predict_tree
from medalforest.errors import EmptyInput, FeatureOutOfRange, ShapeMismatch
from oracles import best_split_oracle, exact_fit_fixture


def test_simple_split():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    tree = fit_tree(X, [0, 0, 10, 10])
    assert tree.feature[0] == 0 and tree.threshold[0] == 2.5
    assert tree.predict(np.array([4.0])) == 10.0
    assert tree.n_samples.tolist() == [4, 2, 2]


def test_constant_target_gives_single_leaf():
    tree = fit_tree(np.arange(10.0).reshape(-1, 1), np.full(10, 3.0))
    assert tree.n_nodes == 1 and tree.value[0] == 3.0


def test_gini_gain_is_twice_variance_gain():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    g_cls = best_split(X, y, "classify").gain
    g_reg = best_split(X, y, "regress").gain
    assert g_cls == pytest.approx(2 * g_reg)
    # parent Gini 0.5, both children pure
    assert g_cls == pytest.approx(0.5)


def test_tie_goes_to_lowest_feature_then_threshold():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    split = best_split(X, np.array([1.0, 1.0, 5.0, 5.0]))
    assert split.feature == 0 and split.threshold == 1.5


def test_no_gain_returns_none():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    assert best_split(X, np.array([1.0, -1.0, -1.0, 1.0])) is None


def test_bootstrap_counts_multiplicity():
    X = np.array([[0.0], [1.0]])
    tree = fit_tree(X, [0.0, 4.0], sample_idx=[0, 0, 0, 1])
    assert tree.n_samples[0] == 4
    assert tree.value[0] == 1.0


def test_max_depth_limits_growth():
    rng = np.random.default_rng(0)
    X, y = rng.random((50, 3)), rng.random(50)
    assert fit_tree(X, y, params=TreeParams(max_depth=2)).depth() <= 2


def test_sqrt_features_samples_per_node():
    assert TreeParams("sqrt").n_candidates(36) == 6
    assert TreeParams("sqrt").n_candidates(3) == 1


def test_json_round_trip_is_exact():
    rng = np.random.default_rng(1)
    X, y = rng.random((40, 4)), rng.random(40)
    tree = fit_tree(X, y, params=TreeParams("sqrt"), rng=5)
    back = DecisionTree.from_json(tree.to_json())
    assert back.same_structure(tree)
    assert np.array_equal(back.predict(X), tree.predict(X))


def test_same_seed_same_tree():
    rng = np.random.default_rng(2)
    X, y = rng.random((60, 6)), rng.random(60)
    a = fit_tree(X, y, params=TreeParams("sqrt"), rng=9)
    b = fit_tree(X, y, params=TreeParams("sqrt"), rng=9)
    assert a.same_structure(b)


def test_errors():
    with pytest.raises(EmptyInput):
        fit_tree(np.empty((0, 2)), np.empty(0))
    with pytest.raises(ShapeMismatch):
        fit_tree(np.ones((3, 2)), np.ones(4))
    with pytest.raises(ShapeMismatch):
        fit_tree(np.ones((3, 2)), [0, 2, 1], task="classify")
    tree = fit_tree(np.array([[0.0, 0.0], [0.0, 1.0]]), [0.0, 1.0])
    with pytest.raises(FeatureOutOfRange):
        predict_tree(tree, np.ones((1, 1)))


small = st.integers(2, 40).flatmap(
    lambda n: st.tuples(
        arrays(np.float64, (n, 3), elements=st.integers(0, 6).map(float)),
        arrays(np.float64, (n,), elements=st.floats(-100, 100, allow_nan=False, width=32)),
    )
)


@settings(max_examples=150, deadline=None)
@given(small)
def test_root_split_matches_brute_force(data):
    X, y = data
    got = best_split(X, y)
    want = best_split_oracle(X, y)
    if want is None:
        assert got is None
    else:
        assert got is not None
        assert (got.feature, got.threshold) == (want[0], want[1])
        assert got.gain == pytest.approx(want[2], rel=1e-9, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_full_tree_fits_distinct_rows_exactly(n, p, seed):
    X, y = exact_fit_fixture(np.random.default_rng(seed), n, p)
    tree = fit_tree(X, y)
    assert np.array_equal(tree.predict(X), y)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**32 - 1))
def test_node_counts_add_up(n, seed):
    rng = np.random.default_rng(seed)
    X, y = rng.random((n, 3)), rng.integers(0, 2, n).astype(float)
    tree = fit_tree(X, y, "classify", TreeParams("sqrt"), rng=rng, sample_idx=rng.integers(0, n, n))
    internal = tree.feature >= 0
    assert np.array_equal(tree.n_samples[internal],
                          tree.n_samples[tree.left[internal]] + tree.n_samples[tree.right[internal]])
    assert np.all((tree.value >= 0) & (tree.value <= 1))
