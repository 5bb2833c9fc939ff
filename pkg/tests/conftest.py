import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mage._fourier import set_workers
from mage.torus import conformal, make_grid, make_metric

settings.register_profile(
    "mage", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("mage")

set_workers(1)


@pytest.fixture(scope="session")
def grid1():
    return make_grid(1, 32)


@pytest.fixture(scope="session")
def flat1(grid1):
    return make_metric(grid1)


@pytest.fixture(scope="session")
def grid2():
    return make_grid(2, 8)


@pytest.fixture(scope="session")
def flat2(grid2):
    return make_metric(grid2)


@pytest.fixture(scope="session")
def conf2(grid2):
    return make_metric(grid2, conformal((0.1, (1, 0, 0, 0))))


def trig(grid, terms):
    """``sum a cos(2 pi <k, x> + phase)`` evaluated directly (test oracle)."""
    xs = grid.coords(sparse=False)
    out = np.zeros(grid.shape)
    for a, k, ph in terms:
        out += a * np.cos(2 * np.pi * sum(kj * x for kj, x in zip(k, xs)) + ph)
    return out


# -- acceptance summary -----------------------------------------------------

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    ok = rep.passed if rep.when == "call" else not rep.failed
    prev = _ACCEPTANCE.get(number, (title, True))[1]
    _ACCEPTANCE[number] = (title, prev and ok)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")
