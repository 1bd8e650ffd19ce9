import numpy as np
import pytest

from coxtail import SurvivalSample

from _helpers import pareto_cox_sample

# (number, title) -> (passed, detail); filled by acceptance tests
ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
    ACCEPTANCE[(number, title)] = (rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), (passed, detail) in sorted(ACCEPTANCE.items()):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number:>2}: {title} | {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def tiny_sample():
    """Eight observations with ties, censoring and one covariate."""
    times = [9.0, 7.5, 7.5, 5.0, 4.0, 3.0, 2.0, 1.5]
    status = [1, 0, 1, 1, 0, 1, 1, 1]
    z = [[0.5], [-1.0], [0.2], [0.0], [1.0], [-0.3], [0.8], [-0.6]]
    return SurvivalSample(times, status, z)


@pytest.fixture
def heavy_sample(rng):
    return pareto_cox_sample(rng, 400)
