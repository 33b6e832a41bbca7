"""Filling gaps in the yearly panel and encoding records as feature vectors."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import (
    COVID_VARIABLES,
    COVID_YEAR,
    HOST_ROLES,
    REGIMES,
    REGIONS,
    NationYearRecord,
    assemble_records,
    feature_year,
)
from .errors import (
    EmptyRegion,
    EmptySeries,
    MissingCounterfactualColumn,
    RuleNotApplicable,
    SchemaViolation,
    TooFewPoints,
    UnfilledCell,
    UnknownCategory,
)

FILL_TAGS = ("observed", "interp", "extrap_const", "extrap_lin", "benchmark")
TREND_VARIABLES = ("gdp", "gdp_precovid", "population")
MAX_TREND_GAP = 5
SCENARIOS = ("actual", "no_covid")


@dataclass(frozen=True)
class TimeSeries:
    nation: str
    variable: str | None
    points: dict = field(default_factory=dict)  # year -> value

    def __post_init__(self):
        object.__setattr__(self, "points", dict(sorted(self.points.items())))

    @property
    def years(self):
        return list(self.points)

    def with_points(self, extra):
        pts = dict(self.points)
        pts.update(extra)
        return replace(self, points=pts)


def interpolate_linear(s):
    """Fill every missing interior year on the line between its known neighbours."""
    if len(s.points) < 2:
        raise TooFewPoints(f"{s.nation}/{s.variable}: need at least 2 points")
    items = list(s.points.items())
    filled = {}
    for (y0, v0), (y1, v1) in zip(items, items[1:]):
        for y in range(y0 + 1, y1):
            filled[y] = v0 + (v1 - v0) * (y - y0) / (y1 - y0)
    return s.with_points(filled)


def extrapolate_constant(s, target_years):
    """Carry the first value backwards and the last value forwards."""
    if not s.points:
        raise EmptySeries(f"{s.nation}/{s.variable}: no points")
    years = s.years
    first, last = years[0], years[-1]
    filled = {}
    for y in target_years:
        if y < first:
            filled[y] = s.points[first]
        elif y > last:
            filled[y] = s.points[last]
    return s.with_points(filled)


def _trend_slope(xs, ys):
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    dx = x - x.mean()
    return float(np.dot(dx, y - y.mean()) / np.dot(dx, dx))


def extrapolate_linear_trend(s, target_years):
    """Extend the series along a least-squares trend.

    With ``n`` missing years on one side (``n`` below six, and more known
    points than missing ones) the slope is fitted over the ``n + 1`` known
    points nearest that side; the line is pinned to the nearest known value.
    Each side is checked independently and :class:`RuleNotApplicable` is
    raised if either fails, so callers can fall back to
    :func:`extrapolate_constant` for that side.
    """
    if s.variable is not None and s.variable not in TREND_VARIABLES:
        raise RuleNotApplicable(f"trend extrapolation does not apply to {s.variable}")
    if not s.points:
        raise RuleNotApplicable("empty series")
    years = s.years
    before = sorted(y for y in target_years if y < years[0])
    after = sorted(y for y in target_years if y > years[-1])
    filled = {}
    for side, anchor_pts in ((before, years), (after, years[::-1])):
        n = len(side)
        if n == 0:
            continue
        if n > MAX_TREND_GAP or len(years) <= n:
            raise RuleNotApplicable(f"{s.nation}/{s.variable}: {n} missing vs {len(years)} known")
        used = anchor_pts[: n + 1]
        slope = _trend_slope(used, [s.points[y] for y in used])
        anchor = used[0]
        for y in side:
            filled[y] = s.points[anchor] + slope * (y - anchor)
    return s.with_points(filled)


def _fill_one(s, years, variable):
    """Fill a non-empty series over ``years``; returns (series, tags)."""
    tags = {y: "observed" for y in s.points if y in years}
    if len(s.points) >= 2:
        interp = interpolate_linear(s)
        for y in interp.points:
            if y not in s.points:
                tags[y] = "interp"
        s = interp
    outside = [y for y in years if y not in s.points]
    before = [y for y in outside if y < s.years[0]]
    after = [y for y in outside if y > s.years[-1]]
    for side in (before, after):
        if not side:
            continue
        if variable in TREND_VARIABLES:
            try:
                trended = extrapolate_linear_trend(s, side)
                if all(trended.points[y] > 0 for y in side):
                    s = trended
                    tags.update({y: "extrap_lin" for y in side})
                    continue
            except RuleNotApplicable:
                pass
        s = extrapolate_constant(s, side)
        tags.update({y: "extrap_const" for y in side})
    return s, tags


def regional_benchmark(series_by_nation, meta, recipients, years, variable=None):
    """Fill fully-missing nations with the unweighted regional mean per year.

    ``series_by_nation`` maps nation -> {year: value} for one variable.
    Only ``recipients`` with no points at all are filled; donors are the
    other nations in the same region with a value for that year.  Returns a
    new mapping plus the list of filled (nation, year) cells.
    """
    out = {n: dict(p) for n, p in series_by_nation.items()}
    filled = []
    for nation in sorted(recipients):
        if series_by_nation.get(nation):
            continue
        region = meta[nation][0]
        donors = [
            d for d, pts in series_by_nation.items()
            if d != nation and pts and meta.get(d, (None,))[0] == region
        ]
        pts = {}
        for y in years:
            values = [series_by_nation[d][y] for d in sorted(donors) if y in series_by_nation[d]]
            if not values:
                raise EmptyRegion(f"no donor in {region} for {variable or 'variable'} in {y}")
            pts[y] = math.fsum(values) / len(values)
            filled.append((nation, y))
        out[nation] = pts
    return out, filled


def panel_years(raw):
    """Calendar years the yearly panel is filled over."""
    fys = [feature_year(y) for _, y in raw.participation]
    if not fys:
        return []
    return list(range(min(fys), max(fys) + 1))


def fill_panel(raw):
    """Return a copy of ``raw`` with every team's series filled.

    Interior gaps are interpolated.  Edges are extended by trend (GDP and
    population, when short enough) or held constant.  Nations without any
    point for a variable receive their region's mean.  Each filled cell is
    tagged in ``fill_tags``.
    """
    teams = {n for n, _ in raw.participation}
    years = panel_years(raw)
    covid_needed = any(feature_year(y) >= COVID_YEAR for _, y in raw.participation)
    variables = ["gdp", "population", "resp_deaths", "resp_incidents"]
    if raw.has_precovid_gdp:
        variables.append("gdp_precovid")
    if covid_needed:
        variables.extend(COVID_VARIABLES)

    new_series = {var: {n: dict(p) for n, p in per.items()} for var, per in raw.series.items()}
    tags = dict(raw.fill_tags)
    for var in variables:
        var_years = [COVID_YEAR] if var in COVID_VARIABLES else years
        per = raw.series.get(var, {})
        filled = {}
        # every nation with a region label can act as a donor
        for nation in sorted(set(per) & set(raw.meta)):
            pts = per[nation]
            if not pts:
                continue
            if var in COVID_VARIABLES:
                filled[nation] = dict(pts)
                tags.update({(var, nation, y): "observed" for y in pts})
                continue
            s, t = _fill_one(TimeSeries(nation, var, pts), set(var_years), var)
            filled[nation] = s.points
            tags.update({(var, nation, y): tag for y, tag in t.items()})
        # teams without metadata cannot be benchmarked; validation reports them
        recipients = [n for n in teams if n in raw.meta and not filled.get(n)]
        filled, benchmarked = regional_benchmark(filled, raw.meta, recipients, var_years, var)
        tags.update({(var, n, y): "benchmark" for n, y in benchmarked})
        # keep raw entries for entities without metadata untouched
        for nation, pts in per.items():
            filled.setdefault(nation, dict(pts))
        new_series[var] = filled
    return replace(raw, series=new_series, fill_tags=tags)


# ---------------------------------------------------------------------------
# Encoding

ATHLETE_BUCKETS = (("athletes_0_9", 0, 9), ("athletes_10_49", 10, 49),
                   ("athletes_50_149", 50, 149), ("athletes_over_149", 150, None))
HOST_FEATURES = tuple(r for r in HOST_ROLES if r != "none")


def _feature_names():
    names = ["gdp_share", "log_population"]
    names += [b[0] for b in ATHLETE_BUCKETS]
    names += ["disease_deaths_quintile", "disease_incidents_quintile"]
    names += [f"host_{r}" for r in HOST_FEATURES]
    names += [f"regime_{r}" for r in REGIMES]
    names += [f"region_{r}" for r in REGIONS]
    names += ["prev_medals"]
    return tuple(names)


FEATURE_NAMES = _feature_names()


def nearest_rank_quintiles(values):
    """20/40/60/80th percentiles as the ceil(p*n)-th order statistic."""
    v = sorted(values)
    n = len(v)
    return tuple(v[-(-k * n // 5) - 1] for k in (1, 2, 3, 4))


def quintile_bin(value, thresholds):
    """Ordinal 1..5: one plus the number of thresholds at or below ``value``."""
    return min(5, 1 + sum(1 for t in thresholds if t <= value))


@dataclass(frozen=True)
class EncodingContext:
    deaths_thresholds: tuple
    incidents_thresholds: tuple
    global_gdp_by_year: dict
    global_gdp_precovid_by_year: dict
    feature_names: tuple = FEATURE_NAMES
    region_labels: tuple = REGIONS
    regime_labels: tuple = REGIMES
    athlete_buckets: tuple = tuple(b[0] for b in ATHLETE_BUCKETS)

    def to_dict(self):
        return {
            "deaths_thresholds": list(self.deaths_thresholds),
            "incidents_thresholds": list(self.incidents_thresholds),
            "global_gdp_by_year": {str(k): v for k, v in sorted(self.global_gdp_by_year.items())},
            "global_gdp_precovid_by_year": {
                str(k): v for k, v in sorted(self.global_gdp_precovid_by_year.items())
            },
            "feature_names": list(self.feature_names),
            "region_labels": list(self.region_labels),
            "regime_labels": list(self.regime_labels),
            "athlete_buckets": list(self.athlete_buckets),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            deaths_thresholds=tuple(d["deaths_thresholds"]),
            incidents_thresholds=tuple(d["incidents_thresholds"]),
            global_gdp_by_year={int(k): v for k, v in d["global_gdp_by_year"].items()},
            global_gdp_precovid_by_year={int(k): v for k, v in d["global_gdp_precovid_by_year"].items()},
            feature_names=tuple(d["feature_names"]),
            region_labels=tuple(d["region_labels"]),
            regime_labels=tuple(d["regime_labels"]),
            athlete_buckets=tuple(d["athlete_buckets"]),
        )


def _require(record, name):
    value = getattr(record, name)
    if value is None:
        raise UnfilledCell(f"{record.nation} {record.games_year}: {name} is not filled")
    return value


def fit_encoding_context(train_records, extra_records=()):
    """Fit quintile thresholds on training rows and GDP totals per Games.

    Thresholds only ever see ``train_records``.  ``extra_records`` (the rows
    to be forecast) contribute to the world-GDP totals, which are features
    known ahead of the Games, not targets.
    """
    train_records = list(train_records)
    if not train_records:
        raise UnfilledCell("cannot fit an encoding context on no records")
    deaths = [_require(r, "resp_deaths") + _require(r, "covid_deaths") for r in train_records]
    incidents = [_require(r, "resp_incidents") + _require(r, "covid_incidents") for r in train_records]
    gdp, gdp_pre = {}, {}
    seen = set()
    for r in list(train_records) + list(extra_records):
        if r.key in seen:
            continue
        seen.add(r.key)
        gdp.setdefault(r.games_year, []).append(_require(r, "gdp"))
        if r.gdp_precovid is not None:
            gdp_pre.setdefault(r.games_year, []).append(r.gdp_precovid)
    counts = {}
    for r in seen:
        counts[r[1]] = counts.get(r[1], 0) + 1
    return EncodingContext(
        deaths_thresholds=nearest_rank_quintiles(deaths),
        incidents_thresholds=nearest_rank_quintiles(incidents),
        global_gdp_by_year={y: math.fsum(v) for y, v in sorted(gdp.items())},
        # a total is only meaningful when every nation of that Games reports it
        global_gdp_precovid_by_year={
            y: math.fsum(v) for y, v in sorted(gdp_pre.items()) if len(v) == counts[y]
        },
    )


def athlete_bucket(athletes):
    for name, lo, hi in ATHLETE_BUCKETS:
        if athletes >= lo and (hi is None or athletes <= hi):
            return name
    raise UnknownCategory(f"negative athlete count {athletes}")


def encode_features(record, ctx, scenario="actual"):
    """Encode one record into a float vector ordered as ``ctx.feature_names``."""
    if scenario not in SCENARIOS:
        raise UnknownCategory(f"unknown scenario {scenario!r}")
    if scenario == "no_covid":
        gdp = record.gdp_precovid
        totals = ctx.global_gdp_precovid_by_year
        if gdp is None or record.games_year not in totals:
            raise MissingCounterfactualColumn(
                f"{record.nation} {record.games_year}: no pre-pandemic GDP")
        covid_d = covid_i = 0.0
    else:
        gdp = _require(record, "gdp")
        totals = ctx.global_gdp_by_year
        covid_d = _require(record, "covid_deaths")
        covid_i = _require(record, "covid_incidents")
    if record.games_year not in totals:
        raise UnfilledCell(f"no world GDP total for Games {record.games_year}")
    pop = _require(record, "population")
    if record.region not in ctx.region_labels:
        raise UnknownCategory(f"unknown region {record.region!r}")
    if record.regime not in ctx.regime_labels:
        raise UnknownCategory(f"unknown regime {record.regime!r}")
    if record.host_role not in HOST_ROLES:
        raise UnknownCategory(f"unknown host role {record.host_role!r}")

    x = [gdp / totals[record.games_year], math.log(pop)]
    bucket = athlete_bucket(record.athletes)
    x += [1.0 if b == bucket else 0.0 for b in ctx.athlete_buckets]
    x.append(float(quintile_bin(_require(record, "resp_deaths") + covid_d, ctx.deaths_thresholds)))
    x.append(float(quintile_bin(_require(record, "resp_incidents") + covid_i, ctx.incidents_thresholds)))
    x += [1.0 if record.host_role == r else 0.0 for r in HOST_FEATURES]
    x += [1.0 if record.regime == r else 0.0 for r in ctx.regime_labels]
    x += [1.0 if record.region == r else 0.0 for r in ctx.region_labels]
    x.append(float(record.prev_medals))
    return np.array(x, dtype=float)


@dataclass(frozen=True)
class DesignMatrix:
    """Encoded rows and targets for one slice of Games.

    ``y_class`` is 1/0 for medal success and -1 where the result is not
    known yet; ``y_log`` is ln(medals) on positive rows and NaN elsewhere.
    """

    X: np.ndarray
    keys: tuple
    y_class: np.ndarray
    y_log: np.ndarray
    prev_medals: np.ndarray
    feature_names: tuple

    def __len__(self):
        return len(self.keys)

    @property
    def positive(self):
        return self.y_class == 1

    @property
    def has_targets(self):
        return bool(len(self.keys)) and bool(np.all(self.y_class >= 0))


def build_design_matrix(records, games_years, ctx, scenario="actual"):
    """Encode every record whose Games are in ``games_years``."""
    if hasattr(records, "records"):
        records = records.records
    wanted = {games_years} if isinstance(games_years, int) else set(games_years)
    rows = sorted((r for r in records if r.games_year in wanted), key=lambda r: (r.games_year, r.nation))
    width = len(ctx.feature_names)
    X = np.empty((len(rows), width))
    y_class = np.empty(len(rows), dtype=np.int64)
    y_log = np.full(len(rows), np.nan)
    for i, r in enumerate(rows):
        X[i] = encode_features(r, ctx, scenario)
        if r.medals is None:
            y_class[i] = -1
        else:
            y_class[i] = int(r.medals > 0)
            if r.medals > 0:
                y_log[i] = math.log(r.medals)
    return DesignMatrix(
        X=X,
        keys=tuple(r.key for r in rows),
        y_class=y_class,
        y_log=y_log,
        prev_medals=np.array([r.prev_medals for r in rows], dtype=np.int64),
        feature_names=tuple(ctx.feature_names),
    )


# ---------------------------------------------------------------------------
# Filled-panel CSV

_PANEL_VALUES = ("gdp", "gdp_precovid", "population", "resp_deaths", "resp_incidents",
                 "covid_deaths", "covid_incidents")
PANEL_COLUMNS = (
    ("nation", "games_year", "feature_year", "medals", "athletes")
    + _PANEL_VALUES
    + ("region", "regime", "host_role", "prev_medals", "num_events")
    + tuple(f"{v}_fill" for v in _PANEL_VALUES)
)


def _cell_tag(raw, var, record):
    if var in COVID_VARIABLES and feature_year(record.games_year) < COVID_YEAR:
        return "observed"
    year = COVID_YEAR if var in COVID_VARIABLES else feature_year(record.games_year)
    return raw.fill_tags.get((var, record.nation, year), "observed")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_panel_csv(raw, path):
    """Write one row per nation and Games with values and fill-method tags."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PANEL_COLUMNS)
        for r in assemble_records(raw):
            row = [r.nation, r.games_year, feature_year(r.games_year), r.medals, r.athletes]
            row += [getattr(r, v) for v in _PANEL_VALUES]
            row += [r.region, r.regime, r.host_role, r.prev_medals, raw.events_per_games.get(r.games_year)]
            row += [_cell_tag(raw, v, r) if getattr(r, v) is not None else "" for v in _PANEL_VALUES]
            w.writerow([_fmt(c) for c in row])


def read_panel_csv(path):
    """Read a panel written by :func:`write_panel_csv`.

    Returns ``(records, events_per_games)``.
    """
    path = Path(path)
    records, events = [], {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != PANEL_COLUMNS:
            raise SchemaViolation(path.name, 1, "not a filled-panel file")
        for lineno, row in enumerate(reader, start=2):
            def num(col, kind=float):
                return None if row[col] == "" else kind(row[col])
            try:
                rec = NationYearRecord(
                    nation=row["nation"],
                    games_year=int(row["games_year"]),
                    medals=num("medals", int),
                    athletes=int(row["athletes"]),
                    gdp=num("gdp"),
                    population=num("population"),
                    resp_deaths=num("resp_deaths"),
                    resp_incidents=num("resp_incidents"),
                    covid_deaths=num("covid_deaths"),
                    covid_incidents=num("covid_incidents"),
                    region=row["region"],
                    regime=row["regime"],
                    host_role=row["host_role"],
                    prev_medals=int(row["prev_medals"]),
                    gdp_precovid=num("gdp_precovid"),
                )
            except ValueError as exc:
                raise SchemaViolation(path.name, lineno, str(exc)) from None
            records.append(rec)
            events[rec.games_year] = int(row["num_events"])
    return records, events
