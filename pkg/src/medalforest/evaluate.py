"""Expanding-window evaluation, accuracy metrics and the no-COVID scenario."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cart import TreeParams, fit_tree
from .errors import InsufficientHistory, KeyMismatch, LeakageDetected, TooFewNations
from .preprocess import build_design_matrix, fit_encoding_context
from .twostage import (
    CLASSIFIER_TREES,
    REGRESSOR_TREES,
    fit_two_stage,
    forecast_games,
    gate,
    naive_forecast,
    rescale_and_round,
)

PAPER_PROTOCOL_YEARS = (2008, 2012, 2016)
TOP_K = 17
CI_PAD = 2

METRICS = (
    ("correct_share_total", "Correct forecast"),
    ("correct_share_nonzero", "Correct forecast (non-zero medals)"),
    ("correct_share_zero", "Correct forecast (zero medals)"),
    ("ci_coverage", "95% confidence intervals +/- {pad} medals"),
    ("top_k_abs_dev", "Absolute deviation top-{k} nations"),
)

# Accuracy of earlier published models on the same Games, shown for context.
PUBLISHED_COMPARATORS = {
    "Tobit Model (Forrest et al., 2010)": {
        "correct_share_total": {2008: 0.47}, "correct_share_nonzero": {2008: 0.17},
        "correct_share_zero": {2008: 0.94}, "top_k_abs_dev": {2008: 92},
    },
    "Tobit Model (Andreff et al., 2008)": {
        "correct_share_total": {2008: 0.05}, "ci_coverage": {2008: 0.60}, "top_k_abs_dev": {2008: 135},
    },
    "Logit Model (Andreff et al., 2008)": {
        "correct_share_total": {2008: 0.0}, "ci_coverage": {2008: 0.45}, "top_k_abs_dev": {2008: 204},
    },
    "Hurdle Model (Scelles et al., 2020)": {
        "correct_share_total": {2016: 0.22}, "correct_share_nonzero": {2016: 0.22},
        "correct_share_zero": {2016: 0.22}, "ci_coverage": {2016: 0.93}, "top_k_abs_dev": {2016: 139},
    },
    "Tobit Model (Scelles et al., 2020)": {
        "correct_share_total": {2016: 0.43}, "correct_share_nonzero": {2016: 0.11},
        "correct_share_zero": {2016: 0.69}, "ci_coverage": {2016: 0.91}, "top_k_abs_dev": {2016: 138},
    },
    "Tobit Model (Maennig and Wellbrock, 2008)": {
        "correct_share_total": {2008: 0.41}, "correct_share_nonzero": {2008: 0.11},
        "correct_share_zero": {2008: 0.83}, "top_k_abs_dev": {2008: 153},
    },
    "OLS (Celik and Gius, 2014)": {
        "correct_share_total": {2012: 0.10}, "correct_share_nonzero": {2012: 0.10},
        "top_k_abs_dev": {2012: 104},
    },
}


# ---------------------------------------------------------------------------
# Metrics


def _check_keys(pred, actual):
    if set(pred) != set(actual):
        missing = sorted(set(actual) ^ set(pred))
        raise KeyMismatch(f"prediction and actual nations differ: {missing[:5]}")


def correct_counts(pred, actual):
    """(hits, n) for all, nonzero and zero subsets, by actual medals."""
    _check_keys(pred, actual)
    out = {"all": [0, 0], "nonzero": [0, 0], "zero": [0, 0]}
    for nation, a in actual.items():
        hit = int(pred[nation] == a)
        sub = "zero" if a == 0 else "nonzero"
        out["all"][0] += hit
        out["all"][1] += 1
        out[sub][0] += hit
        out[sub][1] += 1
    return {k: tuple(v) for k, v in out.items()}


def metric_correct_share(pred, actual, subset="all"):
    """Share of nations whose forecast equals the actual count exactly.

    ``subset`` restricts to nations that actually won zero or more than
    zero medals.  Returns ``None`` when the subset is empty.
    """
    if subset not in ("all", "nonzero", "zero"):
        raise ValueError(f"unknown subset {subset!r}")
    hits, n = correct_counts(pred, actual)[subset]
    return hits / n if n else None


def metric_ci_coverage(intervals, actual, pad=CI_PAD, zero_forecast="pad"):
    """Share of nations whose actual medals lie in the padded interval.

    ``intervals`` maps nation -> (low, high) or ``None`` for nations
    forecast to win nothing.  Those are scored against ``[-pad, pad]``, or
    left out when ``zero_forecast="exclude"``.
    """
    _check_keys(intervals, actual)
    covered = n = 0
    for nation, a in actual.items():
        ci = intervals[nation]
        if ci is None:
            if zero_forecast == "exclude":
                continue
            lo, hi = 0.0, 0.0
        else:
            lo, hi = ci
        n += 1
        covered += int(lo - pad <= a <= hi + pad)
    return covered / n if n else None


def top_k_nations(values, k):
    return sorted(values, key=lambda n: (-values[n], n))[:k]


def metric_top_k_abs_dev(pred, actual, k=TOP_K, rank_by="actual"):
    """Sum of |forecast - actual| over the k nations ranked highest.

    Nations are ranked by actual medals by default (``rank_by="predicted"``
    ranks by forecast); ties go to the lower nation code.
    """
    _check_keys(pred, actual)
    if len(actual) < k:
        raise TooFewNations(f"need {k} nations, have {len(actual)}")
    basis = actual if rank_by == "actual" else pred
    return int(sum(abs(pred[n] - actual[n]) for n in top_k_nations(basis, k)))


# ---------------------------------------------------------------------------
# Evaluation protocol


@dataclass(frozen=True)
class EvaluationPlan:
    target_games: tuple = PAPER_PROTOCOL_YEARS
    seed: int = 0
    n_trees_classifier: int = CLASSIFIER_TREES
    n_trees_regressor: int = REGRESSOR_TREES
    workers: int = 1
    ci_pad: int = CI_PAD
    top_k: int = TOP_K
    top_k_rank_by: str = "actual"
    zero_forecast_ci: str = "pad"
    regressor_rows: str = "actual"
    baselines: tuple = ()  # subset of ("linear", "tree")

    def to_dict(self):
        d = dict(self.__dict__)
        d.pop("workers")
        d["target_games"] = list(self.target_games)
        d["baselines"] = list(self.baselines)
        return d


@dataclass
class ModelScores:
    correct_share_total: float | None
    correct_share_nonzero: float | None
    correct_share_zero: float | None
    ci_coverage: float | None
    top_k_abs_dev: int | None
    counts: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "correct_share_total": self.correct_share_total,
            "correct_share_nonzero": self.correct_share_nonzero,
            "correct_share_zero": self.correct_share_zero,
            "ci_coverage": self.ci_coverage,
            "top_k_abs_dev": self.top_k_abs_dev,
            "counts": {k: list(v) for k, v in self.counts.items()},
        }


def score(pred, actual, intervals=None, plan=None):
    plan = plan or EvaluationPlan()
    counts = correct_counts(pred, actual)
    share = {k: (h / n if n else None) for k, (h, n) in counts.items()}
    cov = None
    if intervals is not None:
        cov = metric_ci_coverage(intervals, actual, plan.ci_pad, plan.zero_forecast_ci)
    dev = None
    if len(actual) >= plan.top_k:
        dev = metric_top_k_abs_dev(pred, actual, plan.top_k, plan.top_k_rank_by)
    return ModelScores(share["all"], share["nonzero"], share["zero"], cov, dev, counts)


@dataclass
class YearResult:
    games_year: int
    n_train: int
    n_nations: int
    scores: dict  # model label -> ModelScores
    forecasts: list
    actual: dict


@dataclass
class MetricsReport:
    plan: EvaluationPlan
    years: list
    data_digest: str = ""

    def row(self, metric, model):
        return {y.games_year: getattr(y.scores[model], metric) for y in self.years if model in y.scores}

    def models(self):
        seen = []
        for y in self.years:
            for m in y.scores:
                if m not in seen:
                    seen.append(m)
        return seen

    def to_dict(self):
        return {
            "format": "medalforest.metrics_report",
            "version": 1,
            "data_digest": self.data_digest,
            "plan": self.plan.to_dict(),
            "years": [
                {
                    "games_year": y.games_year,
                    "n_train": y.n_train,
                    "n_nations": y.n_nations,
                    "scores": {m: s.to_dict() for m, s in y.scores.items()},
                    "forecasts": [f.to_dict() for f in y.forecasts],
                }
                for y in self.years
            ],
            "published": {
                m: {k: {str(yr): v for yr, v in vals.items()} for k, vals in rows.items()}
                for m, rows in PUBLISHED_COMPARATORS.items()
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table_rows(self, published=True):
        """(metric label, model label, {year: value}) in the usual table order."""
        years = [y.games_year for y in self.years]
        rows = []
        for key, label in METRICS:
            label = label.format(pad=self.plan.ci_pad, k=self.plan.top_k)
            for model in self.models():
                rows.append((label, model, self.row(key, model)))
            # published numbers use the default pad and k only
            if published and (self.plan.ci_pad, self.plan.top_k) == (CI_PAD, TOP_K):
                for model, vals in PUBLISHED_COMPARATORS.items():
                    v = {yr: vals.get(key, {}).get(yr) for yr in years}
                    if any(x is not None for x in v.values()):
                        rows.append((label, f"{model} [published]", v))
        return rows

    def to_csv(self):
        years = [y.games_year for y in self.years]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "model"] + [str(y) for y in years])
        for label, model, vals in self.table_rows():
            w.writerow([label, model] + ["" if vals.get(y) is None else _fmt_value(vals.get(y)) for y in years])
        return buf.getvalue()

    def to_text(self):
        years = [y.games_year for y in self.years]
        lines = [f"{'':60s}" + "".join(f"{y:>8d}" for y in years)]
        current = None
        for label, model, vals in self.table_rows():
            if label != current:
                lines.append(label)
                current = label
            cells = "".join(f"{_pct(vals.get(y)):>8s}" for y in years)
            lines.append(f"  {model:58s}{cells}")
        lines.append("")
        lines.append("nations scored: " + ", ".join(f"{y.games_year}={y.n_nations}" for y in self.years))
        lines.append(f"data digest: {self.data_digest}")
        return "\n".join(lines)


def _fmt_value(v):
    return str(v) if isinstance(v, int) else f"{v:.6f}"


def _pct(v):
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return f"{100 * v:.0f}%"


def _actual_map(matrix, records):
    by_key = {r.key: r for r in records}
    return {n: by_key[(n, y)].medals for n, y in matrix.keys}


def _baseline_forecasts(kind, model, train, test, total, seed):
    pos = train.positive
    if kind == "tree":
        tree = fit_tree(train.X[pos], train.y_log[pos], "regress", TreeParams("all"), rng=seed)
        logs = tree.predict(test.X)
    elif kind == "linear":
        A = np.column_stack([np.ones(pos.sum()), train.X[pos]])
        coef, *_ = np.linalg.lstsq(A, train.y_log[pos], rcond=None)
        logs = np.column_stack([np.ones(len(test)), test.X]) @ coef
    else:
        raise ValueError(f"unknown baseline {kind!r}")
    open_ = gate(model, test.X)
    raws = {n: (math.exp(l) if g else None) for (n, _), l, g in zip(test.keys, logs, open_)}
    return rescale_and_round(raws, total)


def evaluate_year(records, events_per_games, target, plan, data_digest=""):
    """Train on every Games before ``target`` and score the ``target`` Games."""
    records = list(records)
    train_records = [r for r in records if r.games_year < target and r.medals is not None]
    test_records = [r for r in records if r.games_year == target]
    if not train_records:
        raise InsufficientHistory(f"no Games before {target} to train on")
    if not test_records or any(r.medals is None for r in test_records):
        raise InsufficientHistory(f"Games {target} has no complete results to score")
    train_years = sorted({r.games_year for r in train_records})
    ctx = fit_encoding_context(train_records, test_records)
    train = build_design_matrix(train_records, train_years, ctx)
    if any(y >= target for _, y in train.keys):
        raise LeakageDetected(f"training rows reach Games {target}")
    model = fit_two_stage(train, ctx, seed=plan.seed, n_trees_classifier=plan.n_trees_classifier,
                          n_trees_regressor=plan.n_trees_regressor, regressor_rows=plan.regressor_rows,
                          workers=plan.workers)
    test = build_design_matrix(test_records, [target], ctx)
    total = 3 * events_per_games[target]
    forecasts, _ = forecast_games(model, test, total)
    actual = _actual_map(test, test_records)
    pred = {f.nation: f.medals for f in forecasts}
    intervals = {f.nation: (None if f.ci_low is None else (f.ci_low, f.ci_high)) for f in forecasts}
    scores = {"Two-stage random forest": score(pred, actual, intervals, plan)}
    prev = {n: int(p) for (n, _), p in zip(test.keys, test.prev_medals)}
    scores["Naive forecast"] = score(naive_forecast(prev, actual), actual, None, plan)
    for kind in plan.baselines:
        label = {"linear": "Linear regression (stage 2)", "tree": "Single decision tree (stage 2)"}[kind]
        bpred = _baseline_forecasts(kind, model, train, test, total, plan.seed)
        scores[label] = score(bpred, actual, None, plan)
    return YearResult(target, len(train), len(test), scores, forecasts, actual)


def run_evaluation(records, events_per_games, plan=None, data_digest=""):
    """Score each target Games with a model trained on all earlier Games."""
    plan = plan or EvaluationPlan()
    if hasattr(records, "records"):
        records = records.records
    years = [evaluate_year(records, events_per_games, t, plan) for t in sorted(plan.target_games)]
    return MetricsReport(plan, years, data_digest)


# ---------------------------------------------------------------------------
# Scenario analysis


@dataclass
class ScenarioRow:
    rank: int
    nation: str
    forecast: int
    no_covid_forecast: int
    delta: int
    prev_medals: int
    delta_prev: int
    ci_low: float | None
    ci_high: float | None
    no_covid_ci_low: float | None
    no_covid_ci_high: float | None

    def to_dict(self):
        return dict(self.__dict__)


SCENARIO_COLUMNS = ("rank", "nation", "forecast", "no_covid_forecast", "delta", "prev_medals",
                    "delta_prev", "ci_low", "ci_high", "no_covid_ci_low", "no_covid_ci_high")


def scenario_delta(model, records, year, total_medals):
    """Forecast ``year`` with observed and with no-COVID features.

    Both runs use the same fitted model.  ``delta`` is the observed-scenario
    forecast minus the no-COVID forecast; ``delta_prev`` compares the
    observed-scenario forecast with the previous Games.
    """
    recs = [r for r in records if r.games_year == year]
    actual_m = build_design_matrix(recs, [year], model.ctx, "actual")
    nocovid_m = build_design_matrix(recs, [year], model.ctx, "no_covid")
    f_act, _ = forecast_games(model, actual_m, total_medals, "actual")
    f_no, _ = forecast_games(model, nocovid_m, total_medals, "no_covid")
    no_by = {f.nation: f for f in f_no}
    prev = {r.nation: r.prev_medals for r in recs}
    rows = []
    for rank, f in enumerate(f_act, start=1):
        g = no_by[f.nation]
        rows.append(ScenarioRow(rank, f.nation, f.medals, g.medals, f.medals - g.medals,
                                prev[f.nation], f.medals - prev[f.nation],
                                f.ci_low, f.ci_high, g.ci_low, g.ci_high))
    return rows


def scenario_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCENARIO_COLUMNS)
    for r in rows:
        w.writerow(["" if getattr(r, c) is None else (repr(getattr(r, c)) if isinstance(getattr(r, c), float)
                    else getattr(r, c)) for c in SCENARIO_COLUMNS])
    return buf.getvalue()


def scenario_to_text(rows, limit=None):
    lines = [f"{'rank':>4s}  {'nation':8s} {'fcst':>5s} {'no-cv':>6s} {'delta':>6s} {'prev':>5s} {'delta':>6s}"]
    for r in rows[:limit] if limit else rows:
        lines.append(f"{r.rank:>4d}  {r.nation:8s} {r.forecast:>5d} {r.no_covid_forecast:>6d} "
                     f"{r.delta:>+6d} {r.prev_medals:>5d} {r.delta_prev:>+6d}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Descriptive checks


def skewness(values):
    """Bias-corrected sample skewness (the adjusted Fisher-Pearson estimator)."""
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 3:
        raise ValueError("skewness needs at least 3 values")
    d = x - x.mean()
    m2 = np.mean(d ** 2)
    m3 = np.mean(d ** 3)
    g1 = m3 / m2 ** 1.5
    return float(g1 * math.sqrt(n * (n - 1)) / (n - 2))


def medal_skewness(records, games_years=None):
    """Skewness of medal counts and of log medals over medal-winning rows."""
    medals = [r.medals for r in records
              if r.medals and (games_years is None or r.games_year in games_years)]
    return skewness(medals), skewness(np.log(medals))
