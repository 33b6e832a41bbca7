"""Raw panel ingestion, Olympic-team mapping and validation.

The input directory holds plain CSV tables (see ``README.md`` for the
schema).  :func:`load_dataset` parses them into a :class:`RawDataset`,
which keeps the yearly socio-economic series separate from the per-Games
participation table.  :class:`NationYearRecord` rows are assembled on
demand by joining the two at the feature year (one year before the Games).
Missing cells stay ``None`` here; filling is done by
:mod:`medalforest.preprocess`.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

from .errors import (
    DuplicateKey,
    MissingFile,
    SchemaViolation,
    ShareSumViolation,
    UnknownEntity,
)

log = logging.getLogger(__name__)

REGIMES = ("CAPME", "POSTCOM", "CEEC")
HOST_ROLES = ("none", "current", "last", "next")
REGIONS = (
    "Sub-Saharan Africa",
    "Latin America and the Caribbean",
    "Western Asia",
    "Southern Europe",
    "South-eastern Asia",
    "Northern Europe",
    "Eastern Europe",
    "Western Europe",
    "Southern Asia",
    "Eastern Asia",
    "Northern Africa",
    "Polynesia",
    "Central Asia",
    "Micronesia",
    "Melanesia",
    "Northern America",
    "Australia and New Zealand",
    "Western Africa",
    "Eastern Africa",
    "Middle Africa",
    "Southern Africa",
)

# Yearly socio-economic variables.  All of them are additive across
# territories, which is what makes aggregate/split mapping well defined.
SERIES_VARIABLES = (
    "gdp",
    "gdp_precovid",
    "population",
    "resp_deaths",
    "resp_incidents",
    "covid_deaths",
    "covid_incidents",
)
COVID_VARIABLES = ("covid_deaths", "covid_incidents")
# The covid table carries no year column; its values are stored at this year.
COVID_YEAR = 2020
# Games held later than their nominal year.
POSTPONED_GAMES = {2020: 2021}

REQUIRED_FILES = (
    "medals.csv",
    "socio.csv",
    "disease.csv",
    "covid.csv",
    "meta.csv",
    "hosts.csv",
    "events.csv",
)
SERIALIZATION_VERSION = 1


def feature_year(games_year):
    """Calendar year whose socio-economic data feed a Games' forecast.

    Usually the year before the Games.  For postponed Games the year before
    the actual date is used, so Tokyo 2020 (held 2021) reads 2020 data.
    """
    return POSTPONED_GAMES.get(games_year, games_year) - 1


@dataclass(frozen=True)
class NationYearRecord:
    """One nation's observation for one Games.

    Socio-economic fields are taken from :func:`feature_year` and are
    ``None`` while unfilled.  ``medals`` is ``None`` for Games that have not
    been held yet.
    """

    nation: str
    games_year: int
    medals: int | None
    athletes: int
    gdp: float | None
    population: float | None
    resp_deaths: float | None
    resp_incidents: float | None
    covid_deaths: float | None
    covid_incidents: float | None
    region: str
    regime: str
    host_role: str
    prev_medals: int
    gdp_precovid: float | None = None

    @property
    def key(self):
        return (self.nation, self.games_year)


@dataclass(frozen=True)
class MappingRule:
    source_entity: str
    target_nation: str
    kind: str  # aggregate | rename | split
    share: float | None = None  # split weight; None = derive from population


@dataclass(frozen=True)
class Participation:
    medals: int | None
    athletes: int
    prev_medals: int | None = None  # explicit override of the lagged count


@dataclass(frozen=True)
class RawDataset:
    """Parsed input tables.

    ``participation`` maps ``(nation, games_year)`` to medals/athletes;
    ``series`` maps variable -> nation -> {year: value}.  ``fill_tags``
    is empty for raw data and populated by the preprocessing step.
    """

    participation: dict
    series: dict
    meta: dict  # nation -> (region, regime)
    hosts: dict  # games_year -> nation
    events_per_games: dict  # games_year -> number of scheduled events
    provenance: dict = field(default_factory=dict)  # file name -> sha256
    fill_tags: dict = field(default_factory=dict)  # (variable, nation, year) -> tag
    has_precovid_gdp: bool = False

    @property
    def games_years(self):
        years = {y for _, y in self.participation}
        years.update(self.events_per_games)
        years.update(self.hosts)
        return sorted(years)

    @property
    def nations(self):
        return sorted({n for n, _ in self.participation})

    def total_medals(self, games_year):
        """Medals at stake: scheduled events times three."""
        return 3 * self.events_per_games[games_year]

    def digest(self):
        return hashlib.sha256(dumps_dataset(self).encode()).hexdigest()

    @cached_property
    def records(self):
        return tuple(assemble_records(self))

    def records_for(self, games_years):
        wanted = set(games_years)
        return [r for r in self.records if r.games_year in wanted]


def _neighbours(years, year):
    i = years.index(year)
    prev_y = years[i - 1] if i > 0 else None
    next_y = years[i + 1] if i + 1 < len(years) else None
    return prev_y, next_y


def _host_role(hosts, nation, year, prev_y, next_y):
    if hosts.get(year) == nation:
        return "current"
    if prev_y is not None and hosts.get(prev_y) == nation:
        return "last"
    if next_y is not None and hosts.get(next_y) == nation:
        return "next"
    return "none"


def assemble_records(raw):
    """Join participation, series and metadata into sorted records."""
    years = raw.games_years
    out = []
    for (nation, gy), part in sorted(raw.participation.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        prev_y, next_y = _neighbours(years, gy)
        if part.prev_medals is not None:
            prev = part.prev_medals
        else:
            prev_part = raw.participation.get((nation, prev_y)) if prev_y is not None else None
            prev = prev_part.medals if prev_part is not None and prev_part.medals is not None else 0
        fy = feature_year(gy)

        def lookup(var, year=fy):
            return raw.series.get(var, {}).get(nation, {}).get(year)

        if fy >= COVID_YEAR:
            covid_d, covid_i = lookup("covid_deaths", COVID_YEAR), lookup("covid_incidents", COVID_YEAR)
        else:
            covid_d = covid_i = 0.0
        gdp = lookup("gdp")
        gdp_pre = lookup("gdp_precovid") if raw.has_precovid_gdp else None
        region, regime = raw.meta.get(nation, (None, None))
        out.append(NationYearRecord(
            nation=nation,
            games_year=gy,
            medals=part.medals,
            athletes=part.athletes,
            gdp=gdp,
            population=lookup("population"),
            resp_deaths=lookup("resp_deaths"),
            resp_incidents=lookup("resp_incidents"),
            covid_deaths=covid_d,
            covid_incidents=covid_i,
            region=region,
            regime=regime,
            host_role=_host_role(raw.hosts, nation, gy, prev_y, next_y),
            prev_medals=prev,
            gdp_precovid=gdp_pre,
        ))
    return out


# ---------------------------------------------------------------------------
# CSV ingestion


def _sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _read_table(path, required, optional=()):
    if not path.is_file():
        raise MissingFile(path.name)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaViolation(path.name, 1, f"missing columns {missing}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if None in row or any(row.get(c) is None for c in required):
                raise SchemaViolation(path.name, lineno, "wrong number of fields")
            rows.append((lineno, {k: (v.strip() if v is not None else "") for k, v in row.items()}))
        return header, rows


def _parse(value, kind, file, lineno, column, allow_blank=False):
    if value == "":
        if allow_blank:
            return None
        raise SchemaViolation(file, lineno, f"empty {column}")
    try:
        if kind is int:
            parsed = int(value)
        else:
            parsed = float(value)
    except ValueError:
        raise SchemaViolation(file, lineno, f"bad {column} {value!r}") from None
    if kind is float and not math.isfinite(parsed):
        raise SchemaViolation(file, lineno, f"non-finite {column}")
    if parsed < 0:
        raise SchemaViolation(file, lineno, f"negative {column}")
    return parsed


def _put_unique(table, key, value, file):
    if key in table:
        raise DuplicateKey(key[0], key[1], file)
    table[key] = value


def load_dataset(input_dir):
    """Parse the input directory into a :class:`RawDataset`.

    Missing numeric cells are kept as absent series points so the
    preprocessing step can see and tag them.
    """
    input_dir = Path(input_dir)
    for name in REQUIRED_FILES:
        if not (input_dir / name).is_file():
            raise MissingFile(name)

    participation = {}
    _, rows = _read_table(input_dir / "medals.csv", ("nation", "games_year", "medals", "athletes"))
    for ln, row in rows:
        f = "medals.csv"
        key = (row["nation"], _parse(row["games_year"], int, f, ln, "games_year"))
        if not key[0]:
            raise SchemaViolation(f, ln, "empty nation")
        part = Participation(
            medals=_parse(row["medals"], int, f, ln, "medals", allow_blank=True),
            athletes=_parse(row["athletes"], int, f, ln, "athletes"),
            prev_medals=_parse(row.get("prev_medals", ""), int, f, ln, "prev_medals", allow_blank=True),
        )
        _put_unique(participation, key, part, f)

    series = {v: {} for v in SERIES_VARIABLES}

    def put_series(var, nation, year, value, file):
        if value is None:
            return
        per_nation = series[var].setdefault(nation, {})
        per_nation[year] = value

    header, rows = _read_table(input_dir / "socio.csv", ("nation", "year", "gdp_usd", "population"))
    has_pre = "gdp_usd_precovid" in header
    seen = set()
    for ln, row in rows:
        f = "socio.csv"
        nation, year = row["nation"], _parse(row["year"], int, f, ln, "year")
        if (nation, year) in seen:
            raise DuplicateKey(nation, year, f)
        seen.add((nation, year))
        gdp = _parse(row["gdp_usd"], float, f, ln, "gdp_usd", allow_blank=True)
        put_series("gdp", nation, year, gdp, f)
        pop = _parse(row["population"], float, f, ln, "population", allow_blank=True)
        if pop is not None and pop <= 0:
            raise SchemaViolation(f, ln, "population must be positive")
        put_series("population", nation, year, pop, f)
        if has_pre:
            pre = _parse(row["gdp_usd_precovid"], float, f, ln, "gdp_usd_precovid", allow_blank=True)
            # blank pre-pandemic cell: no separate forecast, the observed value applies
            put_series("gdp_precovid", nation, year, gdp if pre is None else pre, f)

    _, rows = _read_table(input_dir / "disease.csv", ("nation", "year", "resp_deaths", "resp_incidents"))
    seen = set()
    for ln, row in rows:
        f = "disease.csv"
        nation, year = row["nation"], _parse(row["year"], int, f, ln, "year")
        if (nation, year) in seen:
            raise DuplicateKey(nation, year, f)
        seen.add((nation, year))
        put_series("resp_deaths", nation, year,
                   _parse(row["resp_deaths"], float, f, ln, "resp_deaths", allow_blank=True), f)
        put_series("resp_incidents", nation, year,
                   _parse(row["resp_incidents"], float, f, ln, "resp_incidents", allow_blank=True), f)

    _, rows = _read_table(input_dir / "covid.csv", ("nation", "covid_deaths", "covid_incidents"))
    seen = set()
    for ln, row in rows:
        f = "covid.csv"
        nation = row["nation"]
        if nation in seen:
            raise DuplicateKey(nation, COVID_YEAR, f)
        seen.add(nation)
        for var in COVID_VARIABLES:
            put_series(var, nation, COVID_YEAR, _parse(row[var], float, f, ln, var, allow_blank=True), f)

    meta = {}
    _, rows = _read_table(input_dir / "meta.csv", ("nation", "region", "regime"))
    for ln, row in rows:
        f = "meta.csv"
        if row["nation"] in meta:
            raise DuplicateKey(row["nation"], None, f)
        if row["region"] not in REGIONS:
            raise SchemaViolation(f, ln, f"unknown region {row['region']!r}")
        if row["regime"] not in REGIMES:
            raise SchemaViolation(f, ln, f"unknown regime {row['regime']!r}")
        meta[row["nation"]] = (row["region"], row["regime"])

    hosts = {}
    _, rows = _read_table(input_dir / "hosts.csv", ("games_year", "host_nation"))
    for ln, row in rows:
        f = "hosts.csv"
        year = _parse(row["games_year"], int, f, ln, "games_year")
        if year in hosts:
            raise DuplicateKey(row["host_nation"], year, f)
        hosts[year] = row["host_nation"]

    events = {}
    _, rows = _read_table(input_dir / "events.csv", ("games_year", "num_events"))
    for ln, row in rows:
        f = "events.csv"
        year = _parse(row["games_year"], int, f, ln, "games_year")
        if year in events:
            raise DuplicateKey(None, year, f)
        events[year] = _parse(row["num_events"], int, f, ln, "num_events")

    for nation, gy in participation:
        if gy not in events:
            raise SchemaViolation("events.csv", 0, f"no event count for Games {gy}")

    provenance = {name: _sha256(input_dir / name) for name in REQUIRED_FILES}
    if (input_dir / "mapping.csv").is_file():
        provenance["mapping.csv"] = _sha256(input_dir / "mapping.csv")

    raw = RawDataset(
        participation=participation,
        series=series,
        meta=meta,
        hosts=hosts,
        events_per_games=events,
        provenance=provenance,
        has_precovid_gdp=has_pre,
    )
    log.info("loaded %d nation-Games records for %d nations", len(participation), len(raw.nations))
    return raw


def load_mapping_rules(path):
    """Read ``mapping.csv``; a blank share on a split rule means population-derived."""
    path = Path(path)
    _, rows = _read_table(path, ("source", "target", "kind", "share"))
    rules = []
    for ln, row in rows:
        if row["kind"] not in ("aggregate", "rename", "split"):
            raise SchemaViolation(path.name, ln, f"unknown kind {row['kind']!r}")
        share = _parse(row["share"], float, path.name, ln, "share", allow_blank=True)
        if share is not None and not 0 < share <= 1:
            raise SchemaViolation(path.name, ln, "share must lie in (0, 1]")
        rules.append(MappingRule(row["source"], row["target"], row["kind"], share))
    return rules


# ---------------------------------------------------------------------------
# Nation mapping


def largest_remainder(total, shares):
    """Split a non-negative integer by ``shares`` so the parts sum to ``total``.

    Leftover units go to the largest fractional remainders; ties go to the
    earlier share.
    """
    quotas = [total * s for s in shares]
    parts = [math.floor(q) for q in quotas]
    leftover = total - sum(parts)
    order = sorted(range(len(shares)), key=lambda i: (-(quotas[i] - parts[i]), i))
    for i in order[:leftover]:
        parts[i] += 1
    return parts


def _split_shares(raw, source, targets):
    """Population-proportional shares for a split without explicit weights.

    Uses the target populations at the feature year of the source's last
    Games, or the earliest year where all targets report population.
    """
    pops = raw.series.get("population", {})
    src_years = [y for n, y in raw.participation if n == source]
    candidates = []
    if src_years:
        candidates.append(feature_year(max(src_years)))
    common = set.intersection(*(set(pops.get(t, {})) for t in targets)) if targets else set()
    candidates.extend(sorted(common))
    for year in candidates:
        values = [pops.get(t, {}).get(year) for t in targets]
        if all(v is not None for v in values):
            total = sum(values)
            return [v / total for v in values]
    raise UnknownEntity(f"no population basis to split {source} into {targets}")


def _merge_participation(a, b):
    if a is None:
        return b
    medals = None if a.medals is None and b.medals is None else (a.medals or 0) + (b.medals or 0)
    prev = None if a.prev_medals is None and b.prev_medals is None else (a.prev_medals or 0) + (b.prev_medals or 0)
    return Participation(medals, a.athletes + b.athletes, prev)


def apply_nation_mapping(raw, rules):
    """Move socio-economic and Olympic quantities from data entities to teams.

    ``aggregate`` and ``rename`` rules add the source's quantities into the
    target and drop the source.  ``split`` rules divide them among several
    targets; integer counts use largest-remainder rounding so totals are
    conserved.  Sources absent from the data are a no-op.
    """
    rules = list(rules)
    if not rules:
        return raw
    by_source = {}
    for rule in rules:
        by_source.setdefault(rule.source_entity, []).append(rule)

    participation = dict(raw.participation)
    series = {var: {n: dict(pts) for n, pts in per.items()} for var, per in raw.series.items()}
    meta = dict(raw.meta)

    for source in sorted(by_source):
        group = by_source[source]
        kinds = {r.kind for r in group}
        if len(kinds) != 1:
            raise ShareSumViolation(f"mixed rule kinds for {source}: {sorted(kinds)}")
        kind = kinds.pop()
        targets = [r.target_nation for r in group]
        for t in targets:
            if t not in meta:
                raise UnknownEntity(f"mapping target {t} has no meta.csv entry")
        if kind == "split":
            if any(r.share is None for r in group):
                shares = _split_shares(raw, source, targets)
            else:
                shares = [r.share for r in group]
            if abs(sum(shares) - 1.0) > 1e-9:
                raise ShareSumViolation(f"split shares for {source} sum to {sum(shares)}")
        else:
            if len(group) != 1:
                raise ShareSumViolation(f"{kind} rule for {source} must have exactly one target")
            shares = [1.0]

        for key in sorted(k for k in participation if k[0] == source):
            part = participation.pop(key)
            medals = largest_remainder(part.medals, shares) if part.medals is not None else [None] * len(targets)
            athletes = largest_remainder(part.athletes, shares)
            prevs = largest_remainder(part.prev_medals, shares) if part.prev_medals is not None else [None] * len(targets)
            for t, m, a, p in zip(targets, medals, athletes, prevs):
                tkey = (t, key[1])
                participation[tkey] = _merge_participation(participation.get(tkey), Participation(m, a, p))

        for var, per in series.items():
            pts = per.pop(source, None)
            if not pts:
                continue
            for t, s in zip(targets, shares):
                dest = per.setdefault(t, {})
                for year, value in pts.items():
                    if kind == "split":
                        dest[year] = dest.get(year, 0.0) + s * value
                    elif year in dest:
                        dest[year] = dest[year] + value
                    # aggregate/rename into a year the target does not report:
                    # the target cell stays missing and is filled later
            if not per.get(source):
                per.pop(source, None)
        if source not in targets:
            meta.pop(source, None)

    hosts = {y: _remap_host(n, by_source) for y, n in raw.hosts.items()}
    return replace(raw, participation=participation, series=series, meta=meta, hosts=hosts)


def _remap_host(nation, by_source):
    rules = by_source.get(nation)
    if rules and rules[0].kind in ("rename", "aggregate"):
        return rules[0].target_nation
    return nation


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    n_records: int
    n_nations: int
    missing: dict
    violations: list
    nations_per_games: dict

    @property
    def ok(self):
        return not self.violations

    def to_dict(self):
        return {
            "n_records": self.n_records,
            "n_nations": self.n_nations,
            "missing": dict(sorted(self.missing.items())),
            "violations": list(self.violations),
            "nations_per_games": {str(k): v for k, v in sorted(self.nations_per_games.items())},
        }

    def to_text(self):
        lines = [
            f"observations: {self.n_records}",
            f"nations: {self.n_nations}",
            "nations per Games: " + ", ".join(f"{y}={n}" for y, n in sorted(self.nations_per_games.items())),
        ]
        for var, n in sorted(self.missing.items()):
            if n:
                lines.append(f"missing {var}: {n}")
        lines.append(f"violations: {len(self.violations)}")
        lines.extend(f"  - {v}" for v in self.violations)
        return "\n".join(lines)


_RECORD_NUMERIC = ("gdp", "population", "resp_deaths", "resp_incidents", "covid_deaths", "covid_incidents")


def validate_dataset(raw):
    """Report missing cells and invariant breaches without touching the data."""
    records = assemble_records(raw)
    missing = {var: 0 for var in _RECORD_NUMERIC}
    if raw.has_precovid_gdp:
        missing["gdp_precovid"] = 0
    violations = []
    per_games = {}
    current_hosts = {}
    for r in records:
        per_games[r.games_year] = per_games.get(r.games_year, 0) + 1
        for var in missing:
            if getattr(r, var) is None:
                missing[var] += 1
        if r.medals is not None and r.athletes == 0 and r.medals > 0:
            violations.append(f"medals without athletes: {r.nation} {r.games_year}")
        if r.games_year < COVID_YEAR and ((r.covid_deaths or 0) != 0 or (r.covid_incidents or 0) != 0):
            violations.append(f"covid values before {COVID_YEAR}: {r.nation} {r.games_year}")
        if r.region is None:
            violations.append(f"no meta entry: {r.nation}")
        if r.host_role == "current":
            current_hosts.setdefault(r.games_year, []).append(r.nation)
    for year in sorted(per_games):
        hosts = current_hosts.get(year, [])
        if len(hosts) != 1:
            violations.append(f"Games {year} has {len(hosts)} current hosts among participants")
    for year in sorted(per_games):
        if year not in raw.events_per_games:
            violations.append(f"no event count for Games {year}")
    return ValidationReport(
        n_records=len(records),
        n_nations=len({r.nation for r in records}),
        missing=missing,
        violations=violations,
        nations_per_games=per_games,
    )


# ---------------------------------------------------------------------------
# Serialization


def dataset_to_dict(raw):
    return {
        "format": "medalforest.raw_dataset",
        "version": SERIALIZATION_VERSION,
        "participation": [
            [n, y, p.medals, p.athletes, p.prev_medals]
            for (n, y), p in sorted(raw.participation.items())
        ],
        "series": {
            var: {n: [[y, v] for y, v in sorted(pts.items())] for n, pts in sorted(per.items())}
            for var, per in sorted(raw.series.items())
        },
        "meta": {n: list(v) for n, v in sorted(raw.meta.items())},
        "hosts": [[y, n] for y, n in sorted(raw.hosts.items())],
        "events_per_games": [[y, n] for y, n in sorted(raw.events_per_games.items())],
        "provenance": dict(sorted(raw.provenance.items())),
        "fill_tags": [[var, n, y, tag] for (var, n, y), tag in sorted(raw.fill_tags.items())],
        "has_precovid_gdp": raw.has_precovid_gdp,
    }


def dumps_dataset(raw):
    return json.dumps(dataset_to_dict(raw), sort_keys=True, separators=(",", ":"))


def dataset_from_dict(data):
    if data.get("format") != "medalforest.raw_dataset":
        raise SchemaViolation("dataset.json", 0, "not a serialized dataset")
    if data.get("version") != SERIALIZATION_VERSION:
        raise SchemaViolation("dataset.json", 0, f"unsupported version {data.get('version')}")
    return RawDataset(
        participation={(n, y): Participation(m, a, p) for n, y, m, a, p in data["participation"]},
        series={
            var: {n: {int(y): v for y, v in pts} for n, pts in per.items()}
            for var, per in data["series"].items()
        },
        meta={n: tuple(v) for n, v in data["meta"].items()},
        hosts={int(y): n for y, n in data["hosts"]},
        events_per_games={int(y): n for y, n in data["events_per_games"]},
        provenance=dict(data["provenance"]),
        fill_tags={(var, n, int(y)): tag for var, n, y, tag in data["fill_tags"]},
        has_precovid_gdp=data["has_precovid_gdp"],
    )


def loads_dataset(text):
    return dataset_from_dict(json.loads(text))
