"""SHAP attributions for trees and forests.

:func:`tree_shap` is the polynomial-time path-dependent TreeSHAP algorithm
(Lundberg et al.), which uses the per-node training sample counts as the
conditioning distribution.  :func:`brute_force_shapley` computes the same
quantity by enumerating every coalition and exists to check it.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import FeatureOutOfRange, MissingNodeCounts, TooManyFeatures
from .forest import mean_over_trees, per_tree_predictions

MAX_BRUTE_FORCE_FEATURES = 15


@dataclass(frozen=True)
class Attribution:
    base_value: float
    shap: dict  # feature name -> contribution
    prediction: float

    @property
    def total(self):
        return self.base_value + math.fsum(self.shap.values())

    def sorted_contributions(self):
        return sorted(self.shap.items(), key=lambda kv: (-abs(kv[1]), kv[0]))


# ---------------------------------------------------------------------------
# TreeSHAP kernels.  The path arrays hold, per element: the feature index
# (-1 for the root placeholder), the fraction of "zero" paths (feature not
# in the coalition) and "one" paths (feature in the coalition) flowing
# through, and the permutation weight.


@njit(cache=True)
def _extend(d, z, o, w, depth, pz, po, pi):
    d[depth] = pi
    z[depth] = pz
    o[depth] = po
    w[depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        w[i + 1] += po * w[i] * (i + 1) / (depth + 1)
        w[i] = pz * w[i] * (depth - i) / (depth + 1)


@njit(cache=True)
def _unwind(d, z, o, w, depth, k):
    one = o[k]
    zero = z[k]
    nxt = w[depth]
    for i in range(depth - 1, -1, -1):
        if one != 0.0:
            tmp = w[i]
            w[i] = nxt * (depth + 1) / ((i + 1) * one)
            nxt = tmp - w[i] * zero * (depth - i) / (depth + 1)
        else:
            w[i] = w[i] * (depth + 1) / (zero * (depth - i))
    for i in range(k, depth):
        d[i] = d[i + 1]
        z[i] = z[i + 1]
        o[i] = o[i + 1]


@njit(cache=True)
def _unwound_sum(z, o, w, depth, k):
    one = o[k]
    zero = z[k]
    nxt = w[depth]
    total = 0.0
    if one != 0.0:
        for i in range(depth - 1, -1, -1):
            tmp = nxt / ((i + 1) * one)
            total += tmp
            nxt = w[i] - tmp * zero * (depth - i)
    else:
        for i in range(depth - 1, -1, -1):
            total += w[i] / (zero * (depth - i))
    return total * (depth + 1)


# Recursive kernels are not cached: reloading them from numba's disk cache
# crashes the interpreter.
@njit
def _recurse(node, depth, pd, pz, po, pw, parent_zero, parent_one, parent_feature,
             feature, threshold, left, right, n_samples, value, x, phi):
    d = pd.copy()
    z = pz.copy()
    o = po.copy()
    w = pw.copy()
    _extend(d, z, o, w, depth, parent_zero, parent_one, parent_feature)
    if left[node] < 0:
        for i in range(1, depth + 1):
            phi[d[i]] += _unwound_sum(z, o, w, depth, i) * (o[i] - z[i]) * value[node]
        return
    f = feature[node]
    if x[f] <= threshold[node]:
        hot = left[node]
        cold = right[node]
    else:
        hot = right[node]
        cold = left[node]
    hot_frac = n_samples[hot] / n_samples[node]
    cold_frac = n_samples[cold] / n_samples[node]
    incoming_zero = 1.0
    incoming_one = 1.0
    k = -1
    for p in range(depth + 1):
        if d[p] == f:
            k = p
            break
    if k >= 0:
        incoming_zero = z[k]
        incoming_one = o[k]
        _unwind(d, z, o, w, depth, k)
        depth -= 1
    _recurse(hot, depth + 1, d, z, o, w, hot_frac * incoming_zero, incoming_one, f,
             feature, threshold, left, right, n_samples, value, x, phi)
    _recurse(cold, depth + 1, d, z, o, w, cold_frac * incoming_zero, 0.0, f,
             feature, threshold, left, right, n_samples, value, x, phi)


@njit
def _tree_shap_rows(feature, threshold, left, right, n_samples, value, max_depth, X, out):
    size = max_depth + 2
    for r in range(X.shape[0]):
        d = np.full(size, -1, dtype=np.int64)
        z = np.zeros(size)
        o = np.zeros(size)
        w = np.zeros(size)
        _recurse(0, 0, d, z, o, w, 1.0, 1.0, -1,
                 feature, threshold, left, right, n_samples, value, X[r], out[r])


def _check_tree(tree, X):
    if tree.n_samples is None or np.any(tree.n_samples <= 0):
        raise MissingNodeCounts("tree lacks positive per-node sample counts")
    used = tree.feature[tree.feature >= 0]
    if used.size and X.shape[1] <= int(used.max()):
        raise FeatureOutOfRange(f"input has {X.shape[1]} features, tree uses index {int(used.max())}")


def expected_value(tree):
    """Sample-weighted mean of the leaf values."""
    leaves = tree.feature < 0
    return math.fsum(tree.n_samples[leaves] * tree.value[leaves]) / float(tree.n_samples[leaves].sum())


def tree_shap_values(tree, X):
    """TreeSHAP contributions for each row of ``X``; shape (n_rows, n_features)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_tree(tree, X)
    out = np.zeros((X.shape[0], X.shape[1]))
    if tree.n_nodes > 1:
        _tree_shap_rows(tree.feature, tree.threshold, tree.left, tree.right,
                        tree.n_samples.astype(np.float64), tree.value, tree.depth(), X, out)
    return out


def _names(n, feature_names):
    if feature_names:
        return tuple(feature_names)
    return tuple(f"f{i}" for i in range(n))


def tree_shap(tree, x, feature_names=()):
    """Path-dependent TreeSHAP attribution of one row."""
    x = np.asarray(x, dtype=np.float64)
    phi = tree_shap_values(tree, x[None, :])[0]
    names = _names(x.size, feature_names)
    return Attribution(expected_value(tree), dict(zip(names, phi.tolist())), float(tree.predict(x)))


# ---------------------------------------------------------------------------
# Brute-force reference


def conditional_expectation(tree, coalition, x, node=0):
    """Tree output when only the features in ``coalition`` are known.

    Splits on known features follow ``x``; other splits average both
    children weighted by their training sample counts.
    """
    if tree.feature[node] < 0:
        return float(tree.value[node])
    f = int(tree.feature[node])
    lc, rc = int(tree.left[node]), int(tree.right[node])
    if f in coalition:
        return conditional_expectation(tree, coalition, x, lc if x[f] <= tree.threshold[node] else rc)
    nl, nr = float(tree.n_samples[lc]), float(tree.n_samples[rc])
    return (nl * conditional_expectation(tree, coalition, x, lc)
            + nr * conditional_expectation(tree, coalition, x, rc)) / (nl + nr)


def brute_force_shapley(tree, x, feature_names=()):
    """Exact Shapley values by enumerating every coalition of used features."""
    x = np.asarray(x, dtype=np.float64)
    _check_tree(tree, x[None, :])
    used = sorted({int(f) for f in tree.feature if f >= 0})
    k = len(used)
    if k > MAX_BRUTE_FORCE_FEATURES:
        raise TooManyFeatures(f"{k} features used; enumeration limited to {MAX_BRUTE_FORCE_FEATURES}")
    cache = {}

    def v(coalition):
        if coalition not in cache:
            cache[coalition] = conditional_expectation(tree, coalition, x)
        return cache[coalition]

    phi = np.zeros(x.size)
    for j in used:
        others = [f for f in used if f != j]
        terms = []
        for size in range(k):
            weight = math.factorial(size) * math.factorial(k - size - 1) / math.factorial(k)
            for combo in itertools.combinations(others, size):
                s = frozenset(combo)
                terms.append(weight * (v(s | {j}) - v(s)))
        phi[j] = math.fsum(terms)
    names = _names(x.size, feature_names)
    return Attribution(v(frozenset()), dict(zip(names, phi.tolist())), v(frozenset(used)))


# ---------------------------------------------------------------------------
# Forests


def forest_shap_values(forest, X):
    """Mean TreeSHAP over trees; returns (base_values, phi) for each row.

    ``base_values`` is the mean of the tree expected values (the same for
    every row) and ``phi`` has shape (n_rows, n_features).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    acc = np.zeros((X.shape[0], X.shape[1]))
    for tree in forest.trees:
        acc += tree_shap_values(tree, X)
    base = math.fsum(expected_value(t) for t in forest.trees) / forest.n_trees
    return base, acc / forest.n_trees


def forest_shap(forest, x):
    """Attribution of a regression forest's prediction for one row."""
    x = np.asarray(x, dtype=np.float64)
    base, phi = forest_shap_values(forest, x[None, :])
    names = _names(x.size, forest.feature_names)
    pred = mean_over_trees(per_tree_predictions(forest, x))
    return Attribution(base, dict(zip(names, phi[0].tolist())), pred)


def global_importance(attributions, top_k=20):
    """Features ranked by mean absolute SHAP value (ties by name)."""
    attributions = list(attributions)
    if not attributions:
        raise ValueError("need at least one attribution")
    names = sorted({n for a in attributions for n in a.shap})
    scores = {n: math.fsum(abs(a.shap.get(n, 0.0)) for a in attributions) / len(attributions) for n in names}
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:top_k] if top_k else ranked


def global_importance_matrix(phi, feature_names, top_k=20):
    """Same ranking as :func:`global_importance` from a (rows, features) array."""
    mean_abs = np.abs(np.asarray(phi)).mean(axis=0)
    ranked = sorted(zip(feature_names, mean_abs.tolist()), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:top_k] if top_k else ranked


# ---------------------------------------------------------------------------
# Reports


def explanation_report(nation, scenario, attribution=None, scale=None, games_year=None):
    """JSON-ready explanation in log-medal units.

    ``attribution`` is ``None`` when the gate classified the nation as a
    zero-medal nation; the report then states that and carries no
    contributions.
    """
    report = {"nation": nation, "scenario": scenario, "games_year": games_year}
    if attribution is None:
        report.update(gate_open=False, base_value=None, prediction_log=None,
                      prediction_medals=0, contributions=[],
                      note="gate closed: forecast is 0 medals, no attribution")
        return report
    medals = math.exp(attribution.prediction)
    report.update(
        gate_open=True,
        base_value=attribution.base_value,
        prediction_log=attribution.prediction,
        prediction_medals=medals * scale if scale is not None else medals,
        contributions=[{"feature": n, "shap": v} for n, v in attribution.sorted_contributions()],
    )
    return report


def report_to_text(report, top=15):
    """Force-plot style listing: signed pushes from the base value."""
    head = f"{report['nation']} ({report['scenario']}"
    if report.get("games_year") is not None:
        head += f", {report['games_year']}"
    head += ")"
    if not report["gate_open"]:
        return f"{head}\n  gate closed: 0 medals, no attribution"
    lines = [
        head,
        f"  base value        {report['base_value']:+.4f}  log(medals)",
        f"  prediction        {report['prediction_log']:+.4f}  log(medals)"
        f"  -> {report['prediction_medals']:.2f} medals",
    ]
    for c in report["contributions"][:top]:
        if c["shap"] == 0.0:
            continue
        direction = "higher" if c["shap"] > 0 else "lower"
        lines.append(f"  {c['feature']:<40s} {c['shap']:+.4f}  pushes {direction}")
    return "\n".join(lines)


def dumps_report(report):
    return json.dumps(report, indent=2, sort_keys=True)
