from __future__ import annotations

import shutil
from importlib import resources
from pathlib import Path

import pytest

from impactgraph.cli import DEMO_FILES
from impactgraph.core import Portfolio, Stock


_CRITERIA: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "PASS" if report.passed else "FAIL"
        _CRITERIA[n] = (title, status, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status, seconds = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {title}  ({seconds:.2f} s)")


@pytest.fixture
def portfolio() -> Portfolio:
    return Portfolio(
        "tiny",
        (
            Stock("AAPL", "Apple Inc.", "Technology", ("apple",)),
            Stock("TM", "Toyota Motor Corporation", "Automotive", ("toyota",)),
            Stock("HSBC", "HSBC Holdings plc", "Banking", ("hsbc",)),
        ),
    )


@pytest.fixture
def demo_dir(tmp_path: Path) -> Path:
    """Private copy of the bundled synthetic corpus, prices, TED series and fixtures."""
    src = resources.files("impactgraph.fixtures").joinpath("demo")
    dest = tmp_path / "demo"
    dest.mkdir()
    for name in DEMO_FILES:
        with resources.as_file(src.joinpath(name)) as p:
            shutil.copyfile(p, dest / name)
    return dest
