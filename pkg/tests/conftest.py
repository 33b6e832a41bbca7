import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from medalforest.dataset import load_dataset  # noqa: E402
from medalforest.preprocess import build_design_matrix, fill_panel, fit_encoding_context  # noqa: E402
from medalforest.synthetic import write_fixture, write_split_fixture  # noqa: E402
from medalforest.twostage import fit_two_stage  # noqa: E402

# Outcomes of tests marked ``criterion``, printed as a block at the end.
_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    name = _CRITERIA.get(report.nodeid, {}).get("name")
    if name is None:
        return
    entry = _CRITERIA[report.nodeid]
    if report.skipped:
        entry["outcome"] = "SKIP"
    elif report.failed:
        entry["outcome"] = "FAIL"
    elif report.when == "call" and entry["outcome"] is None:
        entry["outcome"] = "PASS"


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            _CRITERIA[item.nodeid] = {"name": mark.args[0], "outcome": None}


def pytest_terminal_summary(terminalreporter):
    ran = [e for e in _CRITERIA.values() if e["outcome"]]
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for e in ran:
        terminalreporter.write_line(f"{e['outcome']:4s}  {e['name']}")


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    return write_fixture(tmp_path_factory.mktemp("fixture"), seed=7)


@pytest.fixture(scope="session")
def covid_free_dir(tmp_path_factory):
    return write_fixture(tmp_path_factory.mktemp("nocovid"), seed=7, covid=False)


@pytest.fixture(scope="session")
def split_dir(tmp_path_factory):
    return write_split_fixture(tmp_path_factory.mktemp("split"))


@pytest.fixture(scope="session")
def filled(fixture_dir):
    return fill_panel(load_dataset(fixture_dir))


@pytest.fixture(scope="session")
def trained(filled):
    """Small model trained on Games before 2016, plus its context and records."""
    records = filled.records
    train = [r for r in records if r.games_year < 2016]
    test = [r for r in records if r.games_year == 2016]
    ctx = fit_encoding_context(train, test)
    years = sorted({r.games_year for r in train})
    matrix = build_design_matrix(train, years, ctx)
    model = fit_two_stage(matrix, ctx, seed=3, n_trees_regressor=100)
    return model, records
