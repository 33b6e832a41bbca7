"""Binary CART trees for classification (Gini) and regression (variance).

Trees are stored as flat node arrays so they can be predicted in bulk,
serialized exactly, and walked by TreeSHAP.  Every node keeps the number
of training samples that reached it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import EmptyInput, FeatureOutOfRange, ShapeMismatch

TASKS = ("classify", "regress")
TREE_FORMAT_VERSION = 1

# Gains within this relative distance of the best are treated as ties.
_TIE_RTOL = 1e-10
# A split must remove at least this fraction of the node's variance.
_MIN_RELATIVE_GAIN = 1e-13


@dataclass(frozen=True)
class TreeParams:
    max_features: str = "all"  # "all" | "sqrt"
    min_samples_split: int = 2
    max_depth: int | None = None

    def __post_init__(self):
        if self.max_features not in ("all", "sqrt"):
            raise ValueError(f"max_features must be 'all' or 'sqrt', not {self.max_features!r}")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be at least 2")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")

    def n_candidates(self, n_features):
        if self.max_features == "sqrt":
            return max(1, int(math.isqrt(n_features)))
        return n_features

    def to_dict(self):
        return {"max_features": self.max_features, "min_samples_split": self.min_samples_split,
                "max_depth": self.max_depth}


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


@njit(cache=True)
def _scan_splits(X, y, idx, features):
    """Best (feature, threshold, variance reduction) over ``features``.

    ``features`` must be sorted ascending.  Returns feature -1 when no split
    reduces the node variance.
    """
    n = idx.size
    mean = 0.0
    for i in range(n):
        mean += y[idx[i]]
    mean /= n
    yc = np.empty(n)
    total = 0.0
    parent_ss = 0.0
    for i in range(n):
        yc[i] = y[idx[i]] - mean
        total += yc[i]
        parent_ss += yc[i] * yc[i]
    if parent_ss <= 0.0 or n < 2:
        return -1, np.nan, 0.0

    m = features.size
    n_cand = m * (n - 1)
    gains = np.full(n_cand, -np.inf)
    thresholds = np.empty(n_cand)
    vals = np.empty(n)
    base = total * total / n
    for fi in range(m):
        f = features[fi]
        for i in range(n):
            vals[i] = X[idx[i], f]
        order = np.argsort(vals, kind="mergesort")
        left_sum = 0.0
        for k in range(n - 1):
            left_sum += yc[order[k]]
            v0 = vals[order[k]]
            v1 = vals[order[k + 1]]
            if not v0 < v1:
                continue
            nl = k + 1
            nr = n - nl
            right_sum = total - left_sum
            gain = (left_sum * left_sum / nl + right_sum * right_sum / nr - base) / n
            thr = 0.5 * (v0 + v1)
            if thr >= v1:
                thr = v0
            pos = fi * (n - 1) + k
            gains[pos] = gain
            thresholds[pos] = thr

    best = -np.inf
    for pos in range(n_cand):
        if gains[pos] > best:
            best = gains[pos]
    if not best > _MIN_RELATIVE_GAIN * parent_ss / n:
        return -1, np.nan, 0.0
    cutoff = best - _TIE_RTOL * best
    for pos in range(n_cand):
        if gains[pos] >= cutoff:
            return features[pos // (n - 1)], thresholds[pos], gains[pos]
    return -1, np.nan, 0.0


def _as_xy(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatch(f"X must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyInput("cannot fit a tree on no samples or no features")
    if y.shape != (X.shape[0],):
        raise ShapeMismatch(f"y has shape {y.shape}, expected ({X.shape[0]},)")
    return X, y


def best_split(X, y, task="regress", feature_subset=None, sample_idx=None):
    """Maximal impurity-decrease split over ``feature_subset``.

    Candidate thresholds are midpoints between consecutive distinct values.
    The gain is the decrease of node impurity (Gini for ``classify``,
    variance for ``regress``) weighted by child size.  Ties go to the lowest
    feature index, then the lowest threshold.  Returns ``None`` when no split
    has positive gain.
    """
    X, y = _as_xy(X, y)
    idx = np.arange(X.shape[0]) if sample_idx is None else np.asarray(sample_idx, dtype=np.int64)
    if idx.size < 2:
        return None
    if feature_subset is None:
        feats = np.arange(X.shape[1], dtype=np.int64)
    else:
        feats = np.array(sorted(set(int(f) for f in feature_subset)), dtype=np.int64)
    f, thr, gain = _scan_splits(X, y, idx, feats)
    if f < 0:
        return None
    # Gini decrease of a 0/1 target is twice its variance decrease
    scale = 2.0 if task == "classify" else 1.0
    return Split(int(f), float(thr), scale * float(gain))


@dataclass(frozen=True, eq=False)
class DecisionTree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    n_samples: np.ndarray
    value: np.ndarray
    task: str
    n_features: int

    @property
    def n_nodes(self):
        return self.feature.size

    @property
    def is_leaf(self):
        return self.feature < 0

    def depth(self):
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def predict(self, X):
        return predict_tree(self, X)

    def to_dict(self):
        return {
            "format": "medalforest.tree",
            "version": TREE_FORMAT_VERSION,
            "task": self.task,
            "n_features": self.n_features,
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "n_samples": self.n_samples.tolist(),
            "value": [float(v) for v in self.value],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "medalforest.tree" or d.get("version") != TREE_FORMAT_VERSION:
            raise ValueError("not a serialized tree of a supported version")
        return cls(
            feature=np.array(d["feature"], dtype=np.int64),
            threshold=np.array(d["threshold"], dtype=np.float64),
            left=np.array(d["left"], dtype=np.int64),
            right=np.array(d["right"], dtype=np.int64),
            n_samples=np.array(d["n_samples"], dtype=np.int64),
            value=np.array(d["value"], dtype=np.float64),
            task=d["task"],
            n_features=d["n_features"],
        )

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def same_structure(self, other):
        return (
            self.task == other.task
            and self.n_features == other.n_features
            and all(
                np.array_equal(getattr(self, a), getattr(other, a), equal_nan=a == "threshold")
                for a in ("feature", "threshold", "left", "right", "n_samples", "value")
            )
        )


def fit_tree(X, y, task="regress", params=None, rng=None, sample_idx=None):
    """Grow a tree by greedy recursive partitioning.

    Parameters
    ----------
    X, y : array-like
        Training features and targets (0/1 labels for ``classify``).
    task : {"classify", "regress"}
    params : TreeParams, optional
    rng : numpy.random.Generator or int, optional
        Drives the per-node feature subsets when ``max_features="sqrt"``.
    sample_idx : array of int, optional
        Rows to train on, repeats allowed (bootstrap samples).  Repeated
        rows count once per occurrence in ``n_samples`` and leaf means.
    """
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}")
    params = params or TreeParams()
    X, y = _as_xy(X, y)
    if task == "classify" and not np.all((y == 0) | (y == 1)):
        raise ShapeMismatch("classification targets must be 0/1")
    rng = np.random.default_rng(rng)
    idx_all = np.arange(X.shape[0], dtype=np.int64) if sample_idx is None else np.asarray(sample_idx, dtype=np.int64)
    if idx_all.size == 0:
        raise EmptyInput("cannot fit a tree on no samples")
    n_feat = X.shape[1]
    k = params.n_candidates(n_feat)

    feature, threshold, left, right, n_samples, value = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        n_samples.append(int(idx.size))
        value.append(float(np.mean(y[idx])))
        return len(feature) - 1

    root = new_node(idx_all)
    stack = [(root, idx_all, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if idx.size < params.min_samples_split:
            continue
        if params.max_depth is not None and depth >= params.max_depth:
            continue
        ys = y[idx]
        if np.all(ys == ys[0]):
            continue
        sub = X[idx]
        varying = np.flatnonzero(sub.max(axis=0) > sub.min(axis=0))
        if varying.size == 0:
            continue
        if k < varying.size:
            feats = np.sort(rng.choice(varying, size=k, replace=False))
        else:
            feats = varying
        f, thr, _ = _scan_splits(X, y, idx, feats.astype(np.int64))
        if f < 0:
            continue
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = int(f)
        threshold[node] = float(thr)
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return DecisionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        n_samples=np.array(n_samples, dtype=np.int64),
        value=np.array(value, dtype=np.float64),
        task=task,
        n_features=n_feat,
    )


def _check_width(tree, X):
    used = tree.feature[tree.feature >= 0]
    need = int(used.max()) + 1 if used.size else 0
    if X.shape[1] < need:
        raise FeatureOutOfRange(f"input has {X.shape[1]} features, tree uses index {need - 1}")


def predict_tree(tree, X):
    """Leaf value for each row (or a scalar for a single 1-D input).

    Rows go left when ``x[feature] <= threshold``.  Classification trees
    return the positive-class fraction of the leaf.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    _check_width(tree, X)
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = np.arange(X.shape[0])
    while active.size:
        f = tree.feature[node[active]]
        internal = f >= 0
        active = active[internal]
        if not active.size:
            break
        cur = node[active]
        go_left = X[active, tree.feature[cur]] <= tree.threshold[cur]
        node[active] = np.where(go_left, tree.left[cur], tree.right[cur])
    out = tree.value[node]
    return float(out[0]) if single else out
