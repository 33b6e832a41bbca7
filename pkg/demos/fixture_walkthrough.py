"""Walk a synthetic input directory through loading, checks and gap filling.

Run with ``python3 demos/fixture_walkthrough.py``.  Everything happens in a
temporary directory; nothing is written to the working tree.
"""

import collections
import tempfile

import numpy as np

from medalforest.dataset import load_dataset, validate_dataset
from medalforest.evaluate import medal_skewness
from medalforest.preprocess import build_design_matrix, fill_panel, fit_encoding_context
from medalforest.synthetic import write_fixture

with tempfile.TemporaryDirectory() as tmp:
    data_dir = write_fixture(tmp, seed=7, future_games=2024)
    raw = load_dataset(data_dir)

print(validate_dataset(raw).to_text())
print()

# Gaps in the yearly series are filled by interpolation, edge extension or
# the regional mean; every filled cell keeps a tag saying which.
panel = fill_panel(raw)
tags = collections.Counter((var, tag) for (var, _, _), tag in panel.fill_tags.items())
for (var, tag), n in sorted(tags.items()):
    print(f"{var:<16s} {tag:<13s} {n:5d}")
print()

scored = [r for r in panel.records if r.medals is not None]
raw_skew, log_skew = medal_skewness(scored)
print(f"skewness of medal counts among medal winners: {raw_skew:.2f} (log scale: {log_skew:.2f})")

# Quintile cut points come from the training rows only.
train = [r for r in panel.records if r.games_year < 2024]
ctx = fit_encoding_context(train, [r for r in panel.records if r.games_year == 2024])
m = build_design_matrix(train, sorted({r.games_year for r in train}), ctx)
print(f"design matrix: {m.X.shape[0]} rows x {m.X.shape[1]} features")
print("respiratory death quintile cut points:", np.round(ctx.deaths_thresholds, 6))
print("first row:", dict(zip(m.feature_names[:6], np.round(m.X[0, :6], 4))))
