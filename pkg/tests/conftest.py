import pytest

from flexsim.config import bundled_config_path, load_config
from flexsim.kernel import run_scenario

CRITERIA = {
    1: "Thermal oracle",
    2: "Fleet parameter envelope",
    3: "Door-opening calibration",
    4: "Gateway contract",
    5: "Network calibration",
    6: "KS correctness",
    7: "Clustering recovery",
    8: "DR event property",
    9: "Capacity oracle",
    10: "Statistics oracles",
    11: "Determinism",
}

_outcomes: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        ok = rep.outcome == "passed"
        prev = _outcomes.get(n, [])
        _outcomes[n] = prev + [(item.name, ok)]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        results = _outcomes.get(n)
        if results is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(ok for _, ok in results) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}  {status:7s}  {title}")


@pytest.fixture(scope="session")
def bundled_config():
    config, _ = load_config(bundled_config_path())
    return config


@pytest.fixture(scope="session")
def bundled_run(bundled_config):
    return run_scenario(bundled_config)
