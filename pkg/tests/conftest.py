import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from strichartz_lab import _accel

settings.register_profile(
    "lab", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "lab"))

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        if rep.failed:
            detail = detail or str(rep.longrepr).strip().splitlines()[-1]
        _CRITERIA[num] = (title, "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL"), detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[num]
        terminalreporter.write_line(f"{status}  criterion {num:2d}  {title}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


@pytest.fixture(params=["numpy", "numba"])
def backend(request, monkeypatch):
    """Run a test once per compute backend."""
    if request.param == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    monkeypatch.setattr(_accel, "USE_NUMBA", request.param == "numba")
    return request.param
