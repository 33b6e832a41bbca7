"""Back-test the two-stage forest on three Games of a synthetic panel.

Each target Games is forecast by a model trained on all earlier Games and
scored against the naive "same as last time" forecast and two single-stage
baselines.  Run with ``python3 demos/backtest.py``; pass ``--full`` for the
default 1000 regressor trees instead of the quicker 200.
"""

import sys
import tempfile

from medalforest.dataset import load_dataset
from medalforest.evaluate import EvaluationPlan, run_evaluation
from medalforest.preprocess import fill_panel
from medalforest.synthetic import write_fixture

trees = 1000 if "--full" in sys.argv else 200

with tempfile.TemporaryDirectory() as tmp:
    raw = load_dataset(write_fixture(tmp, seed=7))
panel = fill_panel(raw)

plan = EvaluationPlan(target_games=(2008, 2012, 2016), n_trees_regressor=trees, seed=1,
                      top_k=10, baselines=("linear", "tree"))
report = run_evaluation(panel.records, panel.events_per_games, plan, raw.digest())
print(report.to_text())
print()

# The forest should call more nations exactly right than carrying over the
# previous Games' count.
for year in report.years:
    ours = year.scores["Two-stage random forest"].correct_share_total
    naive = year.scores["Naive forecast"].correct_share_total
    print(f"{year.games_year}: forest {ours:.0%} exact, naive {naive:.0%} exact, "
          f"{year.n_nations} nations, {year.n_train} training rows")
