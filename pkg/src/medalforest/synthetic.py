"""Synthetic input directories in the documented CSV schema.

The generated panel is random but structured: a latent sporting strength
drives athletes and medals, richer and larger nations are stronger, and
hosts get a boost.  It is meant for tests, demos and smoke runs, not for
drawing conclusions about real Games.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .dataset import COVID_YEAR, REGIONS, feature_year

FIXTURE_GAMES = (1996, 2000, 2004, 2008, 2012, 2016, 2020)

# (code, region index, regime)
_NATIONS = (
    ("USA", 15, "CAPME"), ("CHN", 9, "POSTCOM"), ("RUS", 6, "POSTCOM"), ("GBR", 5, "CAPME"),
    ("GER", 7, "CAPME"), ("FRA", 7, "CAPME"), ("JPN", 9, "CAPME"), ("AUS", 16, "CAPME"),
    ("ITA", 3, "CAPME"), ("KOR", 9, "CAPME"), ("CAN", 15, "CAPME"), ("NED", 7, "CAPME"),
    ("BRA", 1, "CAPME"), ("ESP", 3, "CAPME"), ("HUN", 6, "CEEC"), ("POL", 6, "CEEC"),
    ("KEN", 18, "CAPME"), ("JAM", 1, "CAPME"), ("CUB", 1, "POSTCOM"), ("NZL", 16, "CAPME"),
    ("UKR", 6, "POSTCOM"), ("KAZ", 12, "POSTCOM"), ("ETH", 18, "CAPME"), ("TUR", 2, "CAPME"),
    ("IND", 8, "CAPME"), ("EGY", 10, "CAPME"), ("THA", 4, "CAPME"), ("MEX", 1, "CAPME"),
    ("NGR", 17, "CAPME"), ("RSA", 20, "CAPME"), ("FIJ", 14, "CAPME"), ("SAM", 11, "CAPME"),
    ("FSM", 13, "CAPME"), ("NEP", 8, "CAPME"), ("BOL", 1, "CAPME"), ("CMR", 19, "CAPME"),
    ("MAR", 10, "CAPME"), ("VIE", 4, "POSTCOM"), ("PER", 1, "CAPME"), ("ALG", 10, "CAPME"),
)

_HOSTS = {1996: "USA", 2000: "AUS", 2004: "ITA", 2008: "CHN", 2012: "GBR", 2016: "BRA", 2020: "JPN",
          2024: "FRA"}

REFUGEE_TEAM = "EOR"


def _write(path, header, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(v):
    return "" if v is None else repr(float(v))


def write_fixture(out_dir, n_nations=40, games=FIXTURE_GAMES, seed=0, covid=True,
                  refugee=True, missing_rate=0.05, future_games=None):
    """Write a complete input directory and return its path.

    Parameters
    ----------
    out_dir : path
        Created if needed; existing schema files are overwritten.
    n_nations : int
        Number of national teams, at most 40.
    games : sequence of int
        Games years with results.
    seed : int
        Drives every random draw.
    covid : bool
        If False, COVID columns are zero and pre-pandemic GDP equals GDP,
        so the no-COVID scenario coincides with the observed one.
    refugee : bool
        Add a team from 2016 on with no socio-economic data, no athletes
        counted and no medals.
    missing_rate : float
        Share of yearly socio-economic cells left blank.
    future_games : int, optional
        A Games year listed with blank medals (a forecast target).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    nations = _NATIONS[:n_nations]
    n = len(nations)
    all_games = sorted(set(games) | ({future_games} if future_games else set()))
    years = list(range(feature_year(all_games[0]) - 1, feature_year(all_games[-1]) + 1))

    pop0 = np.exp(rng.normal(16.5, 1.6, n))
    gdp_pc0 = np.exp(rng.normal(8.8, 1.1, n))
    growth = rng.normal(0.03, 0.015, n)
    pop_growth = rng.normal(0.01, 0.006, n)
    talent = rng.normal(0.0, 0.6, n)

    socio, disease = [], []
    gdp_at, pop_at = {}, {}
    for i, (code, _, _) in enumerate(nations):
        for t, year in enumerate(years):
            pop = pop0[i] * (1 + pop_growth[i]) ** t
            gdp = pop * gdp_pc0[i] * (1 + growth[i]) ** t
            pre = None
            if covid and year == COVID_YEAR:
                pre = gdp
                gdp = gdp * rng.uniform(0.88, 0.99)
            gdp_at[code, year], pop_at[code, year] = gdp, pop
            keep_gdp = rng.random() >= missing_rate
            keep_pop = rng.random() >= missing_rate
            socio.append([code, year, _num(gdp if keep_gdp else None),
                          _num(round(pop) if keep_pop else None), _num(pre)])
            rate = np.exp(rng.normal(-8.5, 0.8))
            deaths = pop * rate
            incid = deaths * np.exp(rng.normal(3.0, 0.3))
            if rng.random() >= missing_rate:
                disease.append([code, year, _num(deaths), _num(incid)])
    # one nation reports no disease data at all, leaving it to its region
    disease = [r for r in disease if r[0] != nations[-1][0]]

    covid_rows = []
    for code, _, _ in nations:
        if covid:
            cases = pop_at[code, COVID_YEAR] * rng.uniform(0.0, 0.05)
            covid_rows.append([code, _num(cases * rng.uniform(0.005, 0.03)), _num(cases)])
        else:
            covid_rows.append([code, _num(0.0), _num(0.0)])

    medal_rows = []
    events = {}
    for year in all_games:
        host = _HOSTS.get(year)
        total = 0
        fy = feature_year(year)
        world = sum(gdp_at[c, fy] for c, _, _ in nations)
        for i, (code, _, _) in enumerate(nations):
            share = gdp_at[code, fy] / world
            strength = talent[i] + 0.35 * np.log(share * n) + 0.25 * np.log(pop_at[code, fy] / 1e7)
            lam = np.exp(1.0 + 1.6 * strength + (0.35 if code == host else 0.0))
            if strength > -0.9:
                athletes = int(max(10, round(np.exp(4.0 + 0.9 * strength + rng.normal(0, 0.2)))))
                medals = int(rng.poisson(lam))
            else:
                # weak nations send token delegations and never medal
                athletes = int(rng.integers(1, 10))
                medals = 0
            if year == future_games:
                medals_cell = ""
            else:
                medals_cell = medals
                total += medals
            medal_rows.append([code, year, medals_cell, athletes])
        events[year] = max(1, -(-total // 3)) if year != future_games else events[max(events)]
    if refugee:
        for year in [y for y in all_games if y >= 2016]:
            medal_rows.append([REFUGEE_TEAM, year, "" if year == future_games else 0, 0])

    meta = [[code, REGIONS[r], regime] for code, r, regime in nations]
    if refugee:
        meta.append([REFUGEE_TEAM, REGIONS[7], "CAPME"])

    hosts = [[y, _HOSTS[y]] for y in all_games if _HOSTS.get(y) in {c for c, _, _ in nations}]

    _write(out / "medals.csv", ["nation", "games_year", "medals", "athletes"], medal_rows)
    _write(out / "socio.csv", ["nation", "year", "gdp_usd", "population", "gdp_usd_precovid"], socio)
    _write(out / "disease.csv", ["nation", "year", "resp_deaths", "resp_incidents"], disease)
    _write(out / "covid.csv", ["nation", "covid_deaths", "covid_incidents"], covid_rows)
    _write(out / "meta.csv", ["nation", "region", "regime"], meta)
    _write(out / "hosts.csv", ["games_year", "host_nation"], hosts)
    _write(out / "events.csv", ["games_year", "num_events"], sorted(events.items()))
    return out


def write_split_fixture(out_dir):
    """Small directory where Czechoslovakia splits into two teams.

    TCH competes in 1992 with 269 athletes and 7 medals; the successor
    populations in 1991 are 10.3 and 5.3 million.  ``mapping.csv`` has
    blank shares, so they are derived from those populations.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    medals = [["TCH", 1992, 7, 269], ["CZE", 1996, 11, 115], ["SVK", 1996, 3, 71],
              ["GER", 1992, 82, 463], ["GER", 1996, 65, 465]]
    socio = []
    for year in range(1991, 1996):
        socio.append(["CZE", year, 4.0e10 + 1e9 * (year - 1991), 10_300_000])
        socio.append(["SVK", year, 1.5e10 + 5e8 * (year - 1991), 5_300_000])
        socio.append(["GER", year, 1.8e12 + 2e10 * (year - 1991), 80_000_000])
    disease = [[n, y, 1000.0, 30000.0] for n in ("CZE", "SVK", "GER") for y in range(1991, 1996)]
    _write(out / "medals.csv", ["nation", "games_year", "medals", "athletes"], medals)
    _write(out / "socio.csv", ["nation", "year", "gdp_usd", "population"],
           [[n, y, repr(float(g)), p] for n, y, g, p in socio])
    _write(out / "disease.csv", ["nation", "year", "resp_deaths", "resp_incidents"], disease)
    _write(out / "covid.csv", ["nation", "covid_deaths", "covid_incidents"], [])
    _write(out / "meta.csv", ["nation", "region", "regime"],
           [["CZE", "Eastern Europe", "CEEC"], ["SVK", "Eastern Europe", "CEEC"],
            ["GER", "Western Europe", "CAPME"]])
    _write(out / "hosts.csv", ["games_year", "host_nation"], [[1992, "ESP"], [1996, "USA"]])
    _write(out / "events.csv", ["games_year", "num_events"], [[1992, 257], [1996, 271]])
    _write(out / "mapping.csv", ["source", "target", "kind", "share"],
           [["TCH", "CZE", "split", ""], ["TCH", "SVK", "split", ""]])
    return out
