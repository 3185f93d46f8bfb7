import time

import pytest

from nvreadout.analysis import Model
from nvreadout.config import load_preset

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "passed": True, "seconds": 0.0})
    if report.failed or report.skipped:
        entry["passed"] = False
    if report.when == "call":
        entry["seconds"] += report.duration


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "PASS" if e["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {e['title']}  ({e['seconds']:.1f} s)")


@pytest.fixture(scope="session")
def preset_cfg():
    return load_preset("fig3b")


@pytest.fixture(scope="session")
def preset_model(preset_cfg):
    c = preset_cfg
    return Model(B0=c.field.B0, phys=c.physics, readout=c.readout, gates=c.gates)


class Stopwatch:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0
