"""Two-stage forest: a classifier gates medal success, a regressor sizes it.

The regressor predicts ln(medals).  Raw forecasts ``exp(mean log)`` are
rescaled so that they add up to the medals at stake in the Games (events
times three), then rounded half up.  Intervals come from splitting the
regressor into groups of trees and trimming the most deviant group means.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .cart import TreeParams
from .errors import DegenerateTargets, GateClosed, IndivisibleForest, ZeroSum
from .forest import Forest, derive_seed, fit_forest, mean_over_trees, per_tree_predictions
from .preprocess import EncodingContext

CLASSIFIER_TREES = 10
REGRESSOR_TREES = 1000
CI_GROUPS = 100
CI_TRIM = 5
MODEL_FORMAT_VERSION = 1

CLASSIFIER_PARAMS = TreeParams(max_features="sqrt")
REGRESSOR_PARAMS = TreeParams(max_features="all")


@dataclass(frozen=True, eq=False)
class TwoStageModel:
    classifier: Forest
    regressor: Forest
    ctx: EncodingContext
    trained_through: int
    seed: int
    regressor_rows: str = "actual"

    def to_dict(self):
        return {
            "format": "medalforest.two_stage_model",
            "version": MODEL_FORMAT_VERSION,
            "seed": self.seed,
            "trained_through": self.trained_through,
            "regressor_rows": self.regressor_rows,
            "n_trees_classifier": self.classifier.n_trees,
            "n_trees_regressor": self.regressor.n_trees,
            "ctx": self.ctx.to_dict(),
            "classifier": self.classifier.to_dict(),
            "regressor": self.regressor.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "medalforest.two_stage_model" or d.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError("not a serialized two-stage model of a supported version")
        return cls(
            classifier=Forest.from_dict(d["classifier"]),
            regressor=Forest.from_dict(d["regressor"]),
            ctx=EncodingContext.from_dict(d["ctx"]),
            trained_through=d["trained_through"],
            seed=d["seed"],
            regressor_rows=d["regressor_rows"],
        )

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def stage_seeds(seed):
    """Master seeds of the classifier and regressor forests."""
    return derive_seed(seed, 0), derive_seed(seed, 1)


def fit_two_stage(matrix, ctx, seed=0, n_trees_classifier=CLASSIFIER_TREES,
                  n_trees_regressor=REGRESSOR_TREES, classifier_params=CLASSIFIER_PARAMS,
                  regressor_params=REGRESSOR_PARAMS, regressor_rows="actual", workers=1):
    """Fit the gate on every row and the size model on medal-winning rows.

    ``regressor_rows="predicted"`` restricts the size model further to rows
    the fitted gate also classifies as positive.
    """
    if not matrix.has_targets:
        raise DegenerateTargets("training rows must all have known medal counts")
    y_class = matrix.y_class
    if np.all(y_class == 0) or np.all(y_class == 1):
        raise DegenerateTargets("need both zero-medal and medal-winning rows")
    if regressor_rows not in ("actual", "predicted"):
        raise ValueError("regressor_rows must be 'actual' or 'predicted'")
    cls_seed, reg_seed = stage_seeds(seed)
    classifier = fit_forest(matrix.X, y_class, "classify", n_trees_classifier, classifier_params,
                            cls_seed, matrix.feature_names, workers)
    rows = matrix.positive
    if regressor_rows == "predicted":
        rows = rows & (mean_over_trees(per_tree_predictions(classifier, matrix.X)) >= 0.5)
        if not rows.any():
            raise DegenerateTargets("the gate rejects every medal-winning training row")
    regressor = fit_forest(matrix.X[rows], matrix.y_log[rows], "regress", n_trees_regressor,
                           regressor_params, reg_seed, matrix.feature_names, workers)
    trained_through = max(y for _, y in matrix.keys)
    return TwoStageModel(classifier, regressor, ctx, trained_through, int(seed), regressor_rows)


def gate(model, X):
    """Boolean medal-success gate per row (majority vote, ties open)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return np.asarray(mean_over_trees(per_tree_predictions(model.classifier, X))) >= 0.5


def predict_raw(model, x):
    """``exp`` of the mean regressor log output, or ``None`` when gated out."""
    x = np.asarray(x, dtype=np.float64)
    if not gate(model, x)[0]:
        return None
    return math.exp(mean_over_trees(per_tree_predictions(model.regressor, x)))


def round_half_up(value):
    return int(math.floor(value + 0.5))


def scale_factor(raws, total_medals):
    positives = [v for v in raws.values() if v is not None and v > 0]
    denom = math.fsum(positives)
    if not positives or denom <= 0:
        raise ZeroSum("no positive raw prediction to rescale")
    return total_medals / denom


def rescale_and_round(raws, total_medals):
    """Scale raw forecasts to sum to ``total_medals`` and round half up.

    Nations mapped to ``None`` (gated out) get 0.  Rounding is per nation, so
    the rounded total may differ from ``total_medals``.
    """
    s = scale_factor(raws, total_medals)
    return {n: (round_half_up(s * v) if v is not None else 0) for n, v in raws.items()}


def grouped_interval(log_outputs, scale, n_groups=CI_GROUPS, n_trim=CI_TRIM):
    """Interval from consecutive groups of tree outputs.

    The trees are cut into ``n_groups`` consecutive blocks; each block gives
    ``scale * exp(mean log output)``.  The ``n_trim`` block values farthest
    from their common mean are dropped and the min/max of the rest returned.
    """
    log_outputs = np.asarray(log_outputs, dtype=np.float64)
    n = log_outputs.size
    if n_groups < 1 or n % n_groups:
        raise IndivisibleForest(f"{n} trees cannot form {n_groups} equal groups")
    if not 0 <= n_trim < n_groups:
        raise ValueError("n_trim must leave at least one group")
    groups = log_outputs.reshape(n_groups, n // n_groups)
    values = np.array([scale * math.exp(mean_over_trees(g)) for g in groups])
    centre = math.fsum(values) / n_groups
    dev = np.abs(values - centre)
    drop = np.argsort(-dev, kind="stable")[:n_trim]
    kept = np.delete(values, drop)
    return float(kept.min()), float(kept.max())


def confidence_interval(model, x, scale, n_groups=CI_GROUPS, n_trim=CI_TRIM):
    """Grouped-tree interval for one encoded row; see :func:`grouped_interval`."""
    x = np.asarray(x, dtype=np.float64)
    if not gate(model, x)[0]:
        raise GateClosed("no interval for a nation gated to zero medals")
    return grouped_interval(per_tree_predictions(model.regressor, x), scale, n_groups, n_trim)


def naive_forecast(prev_medals, nations=None):
    """Every nation repeats its previous Games; unknown nations get 0."""
    if nations is None:
        return dict(prev_medals)
    return {n: int(prev_medals.get(n, 0)) for n in nations}


@dataclass(frozen=True)
class Forecast:
    nation: str
    games_year: int
    medals: int
    raw: float  # scaled value before rounding; 0.0 when gated out
    ci_low: float | None
    ci_high: float | None
    scenario: str
    gate_open: bool

    def to_dict(self):
        return {
            "nation": self.nation,
            "games_year": self.games_year,
            "medals": self.medals,
            "raw": self.raw,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "scenario": self.scenario,
            "gate_open": self.gate_open,
        }


def forecast_games(model, matrix, total_medals, scenario="actual", with_ci=True,
                   n_groups=CI_GROUPS, n_trim=CI_TRIM):
    """Forecast every row of ``matrix`` (one Games) and rank the result.

    Returns ``(forecasts, scale)``; forecasts are ordered by medals, then
    unrounded value, then nation code.  Intervals are attached only to
    nations with a positive rounded forecast.
    """
    gates = gate(model, matrix.X)
    logs = per_tree_predictions(model.regressor, matrix.X)  # (n_trees, n_rows)
    raws = {}
    for j, (nation, _) in enumerate(matrix.keys):
        raws[nation] = math.exp(mean_over_trees(logs[:, j])) if gates[j] else None
    s = scale_factor(raws, total_medals)
    out = []
    for j, (nation, year) in enumerate(matrix.keys):
        raw = raws[nation]
        scaled = s * raw if raw is not None else 0.0
        medals = round_half_up(scaled) if raw is not None else 0
        lo = hi = None
        if with_ci and medals > 0:
            lo, hi = grouped_interval(logs[:, j], s, n_groups, n_trim)
        out.append(Forecast(nation, year, medals, scaled, lo, hi, scenario, bool(gates[j])))
    out.sort(key=lambda f: (-f.medals, -f.raw, f.nation))
    return out, s
