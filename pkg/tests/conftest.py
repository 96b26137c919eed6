import pytest

from semilin.elliptic import assemble
from semilin.grid import BoxDomain
from semilin.nonlinearity import builtin_catalog, get_builtin, truncate

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def catalog():
    return {f.label: f for f in builtin_catalog()}


@pytest.fixture(scope="session")
def truncated(catalog):
    return {label: truncate(f) for label, f in catalog.items()}


@pytest.fixture(scope="session")
def line128():
    d = BoxDomain((1.0,), (128,))
    return assemble(d, 1.0)


@pytest.fixture(scope="session")
def cubic():
    return get_builtin("cubic_shift")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _ACCEPTANCE.append((marker.args[0], marker.args[1], rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, text, outcome in sorted(_ACCEPTANCE):
        flag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{flag}] criterion {number}: {text}")
