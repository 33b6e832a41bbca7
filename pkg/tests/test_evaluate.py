import dataclasses
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from medalforest.errors import InsufficientHistory, KeyMismatch, TooFewNations
from medalforest.evaluate import (
    EvaluationPlan,
    correct_counts,
    evaluate_year,
    metric_ci_coverage,
    metric_correct_share,
    metric_top_k_abs_dev,
    run_evaluation,
    scenario_delta,
    scenario_to_csv,
    score,
    skewness,
)
from medalforest.dataset import load_dataset
from medalforest.preprocess import fill_panel
from medalforest.twostage import naive_forecast

# Ten nations scored by hand.
ACTUAL = {"A": 10, "B": 5, "C": 3, "D": 1, "E": 0, "F": 0, "G": 0, "H": 2, "I": 0, "J": 7}
PRED = {"A": 10, "B": 4, "C": 3, "D": 0, "E": 0, "F": 1, "G": 0, "H": 2, "I": 0, "J": 9}
CIS = {"A": (8, 11), "B": (6, 9), "C": (5.5, 7), "D": None, "E": None, "F": (0.6, 1.4),
       "G": None, "H": (1.5, 2.5), "I": None, "J": (8, 10)}

PLAN = EvaluationPlan(n_trees_regressor=100, target_games=(2008, 2012))


def test_correct_share_hand_values():
    assert metric_correct_share(PRED, ACTUAL, "all") == 0.6
    assert metric_correct_share(PRED, ACTUAL, "nonzero") == 0.5
    assert metric_correct_share(PRED, ACTUAL, "zero") == 0.75


def test_correct_share_small_example():
    pred, actual = {"A": 3, "B": 0, "C": 1}, {"A": 3, "B": 0, "C": 2}
    assert metric_correct_share(pred, actual) == pytest.approx(2 / 3)
    assert metric_correct_share(pred, actual, "zero") == 1.0


def test_ci_coverage_hand_values():
    assert metric_ci_coverage(CIS, ACTUAL) == 0.9
    assert metric_ci_coverage(CIS, ACTUAL, zero_forecast="exclude") == pytest.approx(5 / 6)
    assert metric_ci_coverage(CIS, ACTUAL, pad=0) == 0.5


def test_ci_boundary():
    assert metric_ci_coverage({"X": (9, 11)}, {"X": 10}) == 1.0
    assert metric_ci_coverage({"X": (9, 11)}, {"X": 13}) == 1.0
    assert metric_ci_coverage({"X": (9, 11)}, {"X": 14}) == 0.0


def test_top_k_hand_values():
    assert metric_top_k_abs_dev(PRED, ACTUAL, k=3) == 3
    assert metric_top_k_abs_dev(PRED, ACTUAL, k=6) == 4
    assert metric_top_k_abs_dev(PRED, PRED, k=10) == 0
    assert metric_top_k_abs_dev({"A": 8, "B": 5, "C": 9}, {"A": 10, "B": 5, "C": 1}, k=2) == 2


def test_top_k_ties_go_to_lower_code():
    actual = {"A": 1, "B": 1, "C": 1}
    assert metric_top_k_abs_dev({"A": 1, "B": 1, "C": 9}, actual, k=2) == 0
    assert metric_top_k_abs_dev({"A": 9, "B": 1, "C": 1}, actual, k=2) == 8


def test_top_k_rank_by_prediction():
    assert metric_top_k_abs_dev(PRED, ACTUAL, k=2, rank_by="predicted") == 2


def test_metric_errors():
    with pytest.raises(KeyMismatch):
        metric_correct_share({"A": 1}, {"B": 1})
    with pytest.raises(TooFewNations):
        metric_top_k_abs_dev(PRED, ACTUAL, k=17)


@given(st.dictionaries(st.text("ABCDEFGHIJ", min_size=2, max_size=2), st.tuples(st.integers(0, 4), st.integers(0, 4)),
                       min_size=1, max_size=40))
def test_decomposition_identity(pairs):
    pred = {n: p for n, (p, _) in pairs.items()}
    actual = {n: a for n, (_, a) in pairs.items()}
    c = correct_counts(pred, actual)
    assert c["all"][0] == c["zero"][0] + c["nonzero"][0]
    assert c["all"][1] == c["zero"][1] + c["nonzero"][1]
    s = score(pred, actual, plan=EvaluationPlan(top_k=1))
    n, nz, nn = c["all"][1], c["zero"][1], c["nonzero"][1]
    lhs = s.correct_share_total * n
    rhs = (s.correct_share_zero or 0) * nz + (s.correct_share_nonzero or 0) * nn
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_naive_self_consistency():
    prev = dict(ACTUAL)
    assert metric_correct_share(naive_forecast(prev, list(prev)), prev) == 1.0


def test_naive_perfect_when_results_repeat(filled):
    records = [dataclasses.replace(r, medals=r.prev_medals) if r.games_year == 2012 else r
               for r in filled.records]
    res = evaluate_year(records, filled.events_per_games, 2012, PLAN)
    assert res.scores["Naive forecast"].correct_share_total == 1.0


def test_training_never_sees_target_or_later_results(filled):
    base = evaluate_year(filled.records, filled.events_per_games, 2012, PLAN)
    # scramble every result from the target Games onwards
    tampered = [dataclasses.replace(r, medals=(r.medals or 0) + 7) if r.games_year >= 2012 else r
                for r in filled.records]
    other = evaluate_year(tampered, filled.events_per_games, 2012, PLAN)
    assert [f.to_dict() for f in base.forecasts] == [f.to_dict() for f in other.forecasts]


def test_insufficient_history(filled):
    with pytest.raises(InsufficientHistory):
        evaluate_year(filled.records, filled.events_per_games, 1996, PLAN)


def test_report_formats(filled):
    plan = dataclasses.replace(PLAN, baselines=("linear", "tree"))
    rep = run_evaluation(filled.records, filled.events_per_games, plan, "digest")
    d = json.loads(rep.to_json())
    assert [y["games_year"] for y in d["years"]] == [2008, 2012]
    assert json.loads(json.dumps(d)) == d
    csv_text = rep.to_csv()
    assert csv_text.splitlines()[0] == "metric,model,2008,2012"
    assert "Naive forecast" in csv_text and "[published]" in csv_text
    text = rep.to_text()
    assert "Single decision tree (stage 2)" in text and "Linear regression (stage 2)" in text


def test_evaluation_independent_of_workers(filled):
    a = run_evaluation(filled.records, filled.events_per_games, PLAN)
    b = run_evaluation(filled.records, filled.events_per_games, dataclasses.replace(PLAN, workers=2))
    assert a.to_json() == b.to_json()


def test_scenario_without_covid_is_a_no_op(covid_free_dir):
    from medalforest.preprocess import build_design_matrix, fit_encoding_context
    from medalforest.twostage import fit_two_stage
    raw = fill_panel(load_dataset(covid_free_dir))
    train = [r for r in raw.records if r.games_year < 2020]
    test = [r for r in raw.records if r.games_year == 2020]
    ctx = fit_encoding_context(train, test)
    model = fit_two_stage(build_design_matrix(train, sorted({r.games_year for r in train}), ctx), ctx,
                          n_trees_regressor=100)
    rows = scenario_delta(model, raw.records, 2020, raw.total_medals(2020))
    assert rows and all(r.delta == 0 for r in rows)
    assert [r.rank for r in rows] == list(range(1, len(rows) + 1))
    header = scenario_to_csv(rows).splitlines()[0].split(",")
    assert header[:7] == ["rank", "nation", "forecast", "no_covid_forecast", "delta", "prev_medals", "delta_prev"]


def test_scenario_with_covid_runs(filled):
    from medalforest.preprocess import build_design_matrix, fit_encoding_context
    from medalforest.twostage import fit_two_stage
    train = [r for r in filled.records if r.games_year < 2020]
    test = [r for r in filled.records if r.games_year == 2020]
    ctx = fit_encoding_context(train, test)
    model = fit_two_stage(build_design_matrix(train, sorted({r.games_year for r in train}), ctx), ctx,
                          n_trees_regressor=100)
    rows = scenario_delta(model, filled.records, 2020, filled.total_medals(2020))
    for r in rows:
        assert r.delta == r.forecast - r.no_covid_forecast
        assert r.delta_prev == r.forecast - r.prev_medals


def test_skewness_against_scipy():
    stats = pytest.importorskip("scipy.stats")
    values = [1, 2, 10, 4, 4, 7, 30]
    assert skewness(values) == pytest.approx(stats.skew(values, bias=False), rel=1e-12)
