"""Forecast an upcoming Games, explain one nation and compare the COVID scenario.

The synthetic panel lists a 2024 Games with blank results.  A model trained
on every earlier Games ranks nations, the strongest forecast is broken down
into feature contributions, and the 2020 Games is re-forecast as if the
pandemic had not happened.  Run with ``python3 demos/forecast_and_explain.py``.
"""

import tempfile

from medalforest.dataset import load_dataset
from medalforest.evaluate import scenario_delta, scenario_to_text
from medalforest.explain import explanation_report, forest_shap, report_to_text
from medalforest.preprocess import build_design_matrix, fill_panel, fit_encoding_context
from medalforest.synthetic import write_fixture
from medalforest.twostage import fit_two_stage, forecast_games

with tempfile.TemporaryDirectory() as tmp:
    panel = fill_panel(load_dataset(write_fixture(tmp, seed=7, future_games=2024)))


def train_before(year):
    train = [r for r in panel.records if r.games_year < year]
    test = [r for r in panel.records if r.games_year == year]
    ctx = fit_encoding_context(train, test)
    matrix = build_design_matrix(train, sorted({r.games_year for r in train}), ctx)
    return fit_two_stage(matrix, ctx, seed=2, n_trees_regressor=300), test


model, test = train_before(2024)
m = build_design_matrix(test, [2024], model.ctx)
rows, scale = forecast_games(model, m, 3 * panel.events_per_games[2024])
print("2024 forecast, top ten")
for f in rows[:10]:
    ci = "no CI" if f.ci_low is None else f"[{f.ci_low:.1f}, {f.ci_high:.1f}]"
    print(f"  {f.nation}  {f.medals:3d}  {ci}")
print(f"  ... {sum(not f.gate_open for f in rows)} nations are forecast to win nothing")
print()

top = rows[0].nation
j = [n for n, _ in m.keys].index(top)
report = explanation_report(top, "actual", forest_shap(model.regressor, m.X[j]), scale, 2024)
print(report_to_text(report, top=8))
print()

model20, _ = train_before(2020)
deltas = scenario_delta(model20, panel.records, 2020, panel.total_medals(2020))
print("2020 with and without the pandemic")
print(scenario_to_text(deltas, limit=10))
