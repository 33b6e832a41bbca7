"""Bagged forests of CART trees with reproducible per-tree randomness.

Tree ``i`` draws its bootstrap sample and feature subsets from a stream
seeded by :func:`derive_seed` ``(master_seed, i)``.  The seed depends
only on the master seed and the tree index, so the forest is identical
however the trees are scheduled across workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .cart import DecisionTree, TreeParams, fit_tree
from .errors import FeatureOutOfRange, ShapeMismatch

FOREST_FORMAT_VERSION = 1


def derive_seed(master_seed, index):
    """Independent 64-bit seed for tree ``index`` of a forest."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def tree_rng(master_seed, index):
    return np.random.default_rng(derive_seed(master_seed, index))


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple
    task: str
    master_seed: int
    params: TreeParams
    feature_names: tuple = ()

    @property
    def n_trees(self):
        return len(self.trees)

    @property
    def n_features(self):
        return self.trees[0].n_features

    def to_dict(self):
        return {
            "format": "medalforest.forest",
            "version": FOREST_FORMAT_VERSION,
            "task": self.task,
            "master_seed": self.master_seed,
            "params": self.params.to_dict(),
            "feature_names": list(self.feature_names),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "medalforest.forest" or d.get("version") != FOREST_FORMAT_VERSION:
            raise ValueError("not a serialized forest of a supported version")
        return cls(
            trees=tuple(DecisionTree.from_dict(t) for t in d["trees"]),
            task=d["task"],
            master_seed=d["master_seed"],
            params=TreeParams(**d["params"]),
            feature_names=tuple(d["feature_names"]),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _fit_one(X, y, task, params, master_seed, i):
    rng = tree_rng(master_seed, i)
    sample = rng.integers(0, X.shape[0], size=X.shape[0])
    return fit_tree(X, y, task, params, rng=rng, sample_idx=sample)


def _fit_block(X, y, task, params, master_seed, indices):
    return [_fit_one(X, y, task, params, master_seed, i) for i in indices]


def fit_forest(X, y, task="regress", n_trees=100, params=None, master_seed=0,
               feature_names=(), workers=1):
    """Fit ``n_trees`` trees, each on a bootstrap sample of the rows.

    ``workers`` > 1 trains contiguous blocks of trees in separate processes;
    the result does not depend on it.
    """
    if n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    params = params or TreeParams()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeMismatch(f"X {X.shape} and y {y.shape} do not line up")
    workers = max(1, int(workers or 1))
    if workers == 1 or n_trees == 1:
        trees = _fit_block(X, y, task, params, master_seed, range(n_trees))
    else:
        blocks = [b.tolist() for b in np.array_split(np.arange(n_trees), min(workers, n_trees))]
        parts = Parallel(n_jobs=workers)(
            delayed(_fit_block)(X, y, task, params, master_seed, b) for b in blocks
        )
        trees = [t for part in parts for t in part]
    return Forest(tuple(trees), task, int(master_seed), params, tuple(feature_names))


def per_tree_predictions(forest, X):
    """Tree outputs in training order.

    For a single row returns a vector of length ``n_trees``; for a matrix,
    an array of shape ``(n_trees, n_rows)``.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if X2.shape[1] < forest.n_features:
        raise FeatureOutOfRange(f"input has {X2.shape[1]} features, forest expects {forest.n_features}")
    out = np.stack([t.predict(X2) for t in forest.trees])
    return out[:, 0] if single else out


def mean_over_trees(per_tree):
    """Exactly rounded mean over axis 0 (compensated summation)."""
    per_tree = np.asarray(per_tree, dtype=np.float64)
    n = per_tree.shape[0]
    if per_tree.ndim == 1:
        return math.fsum(per_tree) / n
    return np.array([math.fsum(col) / n for col in per_tree.T])


def predict_forest(forest, X):
    """Mean tree output (regression) or majority vote (classification).

    A classifier predicts 1 when the mean positive-class fraction is at
    least one half; an exact tie counts as positive.
    """
    mean = mean_over_trees(per_tree_predictions(forest, X))
    if forest.task == "classify":
        return (np.asarray(mean) >= 0.5).astype(np.int64) if np.ndim(mean) else int(mean >= 0.5)
    return mean


def vote_fraction(forest, X):
    """Mean positive-class fraction across trees."""
    return mean_over_trees(per_tree_predictions(forest, X))
