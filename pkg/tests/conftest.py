import math

import pytest

from nelsonlab import Harmonic, SimUnits, make_grid

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def units():
    return SimUnits()


@pytest.fixture(scope="session")
def harmonic():
    return Harmonic(1.0)


@pytest.fixture(scope="session")
def osc_grid():
    # wide enough that rho(x, delta) of the low levels decays inside the displacement window
    return make_grid(-10, 10, 512)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one of the numbered acceptance criteria")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    number, title = marker.args
    detail = "; ".join(f"{k} = {_fmt(v)}" for k, v in item.user_properties)
    prev = _ACCEPTANCE.get(number)
    if prev is None or rep.failed:
        _ACCEPTANCE[number] = (title, "PASS" if rep.passed else "FAIL", detail)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}" if math.isfinite(v) else str(v)
    return str(v)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{status}] {number:2d}. {title}" + (f": {detail}" if detail else ""))
