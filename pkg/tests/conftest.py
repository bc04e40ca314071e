import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sepguard import Dataset  # noqa: E402

# worked example: redundant regressors over y > 0 hide separation from pairwise checks
NINE_ROW_Y = [0, 0, 0, 0, 1, 2, 3, 4, 5]
NINE_ROW_X = [
    [1, -1, 5, 3],
    [1, 2, 0, 1],
    [1, 0, -6, -3],
    [1, 0, 0, 0],
    [1, 3, 3, 3],
    [1, 6, 6, 6],
    [1, 5, 5, 5],
    [1, 7, 7, 7],
    [1, 4, 4, 4],
]
NINE_ROW_CSV = "y,x1,x2,x3,x4\n" + "\n".join(
    ",".join(str(v) for v in [y, *row]) for y, row in zip(NINE_ROW_Y, NINE_ROW_X)) + "\n"


@pytest.fixture
def nine_row():
    return Dataset.from_arrays(NINE_ROW_Y, NINE_ROW_X, column_names=("x1", "x2", "x3", "x4"))


@pytest.fixture
def nine_row_csv(tmp_path):
    path = tmp_path / "nine_row.csv"
    path.write_text(NINE_ROW_CSV)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance criteria: one PASS/FAIL line each in the terminal summary -------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.outcome != "passed"):
        return
    number, title = mark.args
    ok = rep.outcome == "passed" and not hasattr(rep, "wasxfail")
    _, before = _CRITERIA.get(number, (title, True))
    _CRITERIA[number] = (title, before and ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}")
