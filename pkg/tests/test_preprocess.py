import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from medalforest.dataset import REGIONS, load_dataset
from medalforest.errors import EmptyRegion, MissingCounterfactualColumn, RuleNotApplicable, UnfilledCell
from medalforest.preprocess import (
    FEATURE_NAMES,
    TimeSeries,
    _fill_one,
    build_design_matrix,
    encode_features,
    extrapolate_constant,
    extrapolate_linear_trend,
    fill_panel,
    fit_encoding_context,
    interpolate_linear,
    nearest_rank_quintiles,
    quintile_bin,
    read_panel_csv,
    regional_benchmark,
    write_panel_csv,
)
from oracles import nearest_rank, normal_equations_trend, quintile_oracle

FROZEN = json.loads((Path(__file__).parent / "data" / "frozen_oracles.json").read_text())


def test_feature_layout():
    assert len(FEATURE_NAMES) == 36
    assert FEATURE_NAMES[:2] == ("gdp_share", "log_population")
    assert FEATURE_NAMES[-1] == "prev_medals"
    assert sum(n.startswith("region_") for n in FEATURE_NAMES) == len(REGIONS) == 21


def test_interior_gap_is_linear():
    s = interpolate_linear(TimeSeries("A", "gdp", {2000: 1.0, 2003: 4.0}))
    assert s.points == {2000: 1.0, 2001: 2.0, 2002: 3.0, 2003: 4.0}


def test_constant_edges():
    s = extrapolate_constant(TimeSeries("A", "resp_deaths", {2001: 5.0, 2002: 7.0}), [1999, 2004])
    assert s.points[1999] == 5.0 and s.points[2004] == 7.0


@pytest.mark.parametrize("case", FROZEN["trend"])
def test_trend_matches_frozen_values(case):
    s = TimeSeries("A", "gdp", dict(zip(case["years"], map(float, case["values"]))))
    out = extrapolate_linear_trend(s, case["targets"])
    assert [out.points[y] for y in case["targets"]] == pytest.approx(case["expected"], abs=1e-12)


def test_trend_needs_more_points_than_gap():
    s = TimeSeries("A", "gdp", {2000: 1.0, 2001: 2.0})
    with pytest.raises(RuleNotApplicable):
        extrapolate_linear_trend(s, [2002, 2003])


def test_trend_gap_of_six_is_not_allowed():
    s = TimeSeries("A", "population", {y: float(y) for y in range(1990, 2010)})
    with pytest.raises(RuleNotApplicable):
        extrapolate_linear_trend(s, list(range(2010, 2016)))


def test_trend_does_not_apply_to_disease():
    with pytest.raises(RuleNotApplicable):
        extrapolate_linear_trend(TimeSeries("A", "resp_deaths", {2000: 1.0, 2001: 2.0}), [2002])


def test_negative_trend_falls_back_to_constant():
    s = TimeSeries("A", "gdp", {2000: 3.0, 2001: 2.0, 2002: 0.5})
    out, tags = _fill_one(s, set(range(2000, 2005)), "gdp")
    assert out.points[2004] == 0.5 and tags[2004] == "extrap_const"


@settings(max_examples=200, deadline=None)
@given(
    n_known=st.integers(2, 12),
    gap=st.integers(1, 5),
    start=st.integers(1960, 2010),
    values=st.lists(st.floats(1e3, 1e12, allow_nan=False), min_size=12, max_size=12),
    forward=st.booleans(),
)
def test_trend_matches_normal_equations(n_known, gap, start, values, forward):
    assume(n_known > gap)
    years = list(range(start, start + n_known))
    s = TimeSeries("A", "gdp", dict(zip(years, values)))
    targets = (list(range(years[-1] + 1, years[-1] + 1 + gap)) if forward
               else list(range(years[0] - gap, years[0])))
    used = years[-(gap + 1):] if forward else years[:gap + 1]
    out = extrapolate_linear_trend(s, targets)
    for t in targets:
        want = normal_equations_trend(used, [s.points[y] for y in used], t)
        assert out.points[t] == pytest.approx(want, rel=1e-9, abs=1e-9 * max(values))


@pytest.mark.parametrize("case", FROZEN["nearest_rank"])
def test_quintiles_frozen(case):
    assert list(nearest_rank_quintiles(case["values"])) == case["expected"]


@given(values=st.lists(st.integers(0, 1000), min_size=1, max_size=200), probe=st.integers(-5, 1005))
def test_quintile_bins_match_nearest_rank(values, probe):
    thresholds = nearest_rank_quintiles(values)
    assert list(thresholds) == [nearest_rank(values, p) for p in (20, 40, 60, 80)]
    assert quintile_bin(probe, thresholds) == quintile_oracle(probe, values)


def test_regional_benchmark_means_donors():
    meta = {"A": ("Polynesia", "CAPME"), "B": ("Polynesia", "CAPME"), "C": ("Polynesia", "CAPME"),
            "D": ("Melanesia", "CAPME")}
    series = {"A": {2000: 2.0}, "B": {2000: 4.0}, "D": {2000: 100.0}}
    out, filled = regional_benchmark(series, meta, ["C"], [2000])
    assert out["C"][2000] == 3.0 and filled == [("C", 2000)]
    with pytest.raises(EmptyRegion):
        regional_benchmark({"A": {2000: 1.0}}, meta, ["D"], [2000])


def test_fill_leaves_no_gaps_and_tags_every_fill(filled, fixture_dir):
    raw = load_dataset(fixture_dir)
    for r in filled.records:
        for var in ("gdp", "population", "resp_deaths", "resp_incidents", "covid_deaths", "covid_incidents"):
            assert getattr(r, var) is not None
    assert set(filled.fill_tags.values()) <= {"observed", "interp", "extrap_const", "extrap_lin", "benchmark"}
    for (var, nation, year), tag in filled.fill_tags.items():
        if tag == "observed":
            assert raw.series[var][nation][year] == filled.series[var][nation][year]


def test_nation_without_disease_data_is_benchmarked(filled):
    assert any(tag == "benchmark" and var == "resp_deaths" for (var, _, _), tag in filled.fill_tags.items())


def test_gdp_shares_sum_to_one(filled):
    records = filled.records
    ctx = fit_encoding_context(records)
    years = sorted({r.games_year for r in records})
    m = build_design_matrix(records, years, ctx)
    for y in years:
        rows = [i for i, k in enumerate(m.keys) if k[1] == y]
        assert math.fsum(m.X[rows, 0]) == pytest.approx(1.0, abs=1e-9)


def test_quintile_thresholds_ignore_test_rows(filled):
    records = filled.records
    train = [r for r in records if r.games_year < 2012]
    test = [r for r in records if r.games_year == 2012]
    a = fit_encoding_context(train, test)
    b = fit_encoding_context(train, [])
    assert a.deaths_thresholds == b.deaths_thresholds
    assert a.incidents_thresholds == b.incidents_thresholds


def test_encoding_is_one_hot(filled):
    ctx = fit_encoding_context(filled.records)
    r = filled.records[0]
    x = encode_features(r, ctx)
    names = list(FEATURE_NAMES)
    block = [i for i, n in enumerate(names) if n.startswith("region_")]
    assert x[block].sum() == 1.0
    assert x[names.index("region_" + r.region)] == 1.0
    assert x[names.index("prev_medals")] == r.prev_medals
    assert 1 <= x[names.index("disease_deaths_quintile")] <= 5


def test_no_covid_scenario_needs_precovid_gdp(split_dir):
    from medalforest.dataset import apply_nation_mapping, load_mapping_rules
    raw = fill_panel(apply_nation_mapping(load_dataset(split_dir), load_mapping_rules(split_dir / "mapping.csv")))
    ctx = fit_encoding_context(raw.records)
    with pytest.raises(MissingCounterfactualColumn):
        encode_features(raw.records[0], ctx, "no_covid")


def test_unfilled_cell_is_refused(fixture_dir):
    raw = load_dataset(fixture_dir)
    with pytest.raises(UnfilledCell):
        fit_encoding_context(raw.records)


def test_panel_csv_round_trip(filled, tmp_path):
    path = tmp_path / "panel.csv"
    write_panel_csv(filled, path)
    records, events = read_panel_csv(path)
    assert records == list(filled.records)
    assert events == {y: filled.events_per_games[y] for y in events}


def test_design_matrix_targets(filled):
    ctx = fit_encoding_context(filled.records)
    m = build_design_matrix(filled.records, [2008], ctx)
    medals = {r.nation: r.medals for r in filled.records if r.games_year == 2008}
    for (nation, _), c, lg in zip(m.keys, m.y_class, m.y_log):
        assert c == int(medals[nation] > 0)
        if medals[nation]:
            assert lg == pytest.approx(np.log(medals[nation]))
        else:
            assert np.isnan(lg)
