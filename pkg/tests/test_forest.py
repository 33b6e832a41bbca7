import numpy as np
import pytest

from medalforest.cart import TreeParams
from medalforest.errors import FeatureOutOfRange, ShapeMismatch
from medalforest.forest import (
    Forest,
    derive_seed,
    fit_forest,
    mean_over_trees,
    per_tree_predictions,
    predict_forest,
    vote_fraction,
)


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(11)
    X = rng.random((80, 5))
    y = X[:, 0] * 3 + rng.normal(0, 0.1, 80)
    return X, y


def test_seeds_are_distinct_and_stable():
    seeds = [derive_seed(42, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert derive_seed(42, 7) == seeds[7]
    assert derive_seed(43, 7) != seeds[7]


def test_worker_count_does_not_change_the_forest(data):
    X, y = data
    a = fit_forest(X, y, n_trees=12, master_seed=5, workers=1)
    b = fit_forest(X, y, n_trees=12, master_seed=5, workers=3)
    assert a.to_json() == b.to_json()


def test_tree_i_depends_only_on_its_index(data):
    X, y = data
    small = fit_forest(X, y, n_trees=3, master_seed=5)
    big = fit_forest(X, y, n_trees=6, master_seed=5)
    for s, b in zip(small.trees, big.trees):
        assert s.same_structure(b)


def test_per_tree_shapes(data):
    X, y = data
    f = fit_forest(X, y, n_trees=4, master_seed=1)
    assert per_tree_predictions(f, X[0]).shape == (4,)
    assert per_tree_predictions(f, X[:7]).shape == (4, 7)
    assert predict_forest(f, X[0]) == pytest.approx(per_tree_predictions(f, X[0]).mean())


def test_fsum_mean_is_order_independent():
    v = np.array([1e16, 1.0, -1e16, 1.0])
    assert mean_over_trees(v) == 0.5
    assert mean_over_trees(v[::-1]) == 0.5


def test_majority_vote_tie_counts_as_positive():
    rng = np.random.default_rng(0)
    X = rng.random((30, 2))
    y = (X[:, 0] > 0.5).astype(float)
    f = fit_forest(X, y, "classify", n_trees=4, params=TreeParams("sqrt"), master_seed=2)
    frac = vote_fraction(f, X)
    assert np.array_equal(predict_forest(f, X), (frac >= 0.5).astype(int))


def test_serialization_round_trip(data):
    X, y = data
    f = fit_forest(X, y, n_trees=3, master_seed=8, feature_names=tuple("abcde"))
    back = Forest.from_json(f.to_json())
    assert back.to_json() == f.to_json()
    assert np.array_equal(per_tree_predictions(back, X), per_tree_predictions(f, X))


def test_shape_errors(data):
    X, y = data
    with pytest.raises(ShapeMismatch):
        fit_forest(X, y[:-1], n_trees=1)
    f = fit_forest(X, y, n_trees=2)
    with pytest.raises(FeatureOutOfRange):
        per_tree_predictions(f, X[:, :2])
