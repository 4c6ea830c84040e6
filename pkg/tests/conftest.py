import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(num, label): ties a test to one acceptance criterion")
    config._acceptance_outcomes = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    num, label = marker.args
    store = item.config._acceptance_outcomes
    if report.when == "setup" and report.skipped:
        store[(num, label)] = "SKIP"
    elif report.when == "call":
        if report.skipped:
            store[(num, label)] = "SKIP"
        else:
            store[(num, label)] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes = getattr(config, "_acceptance_outcomes", {})
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for (num, label), status in sorted(outcomes.items()):
        terminalreporter.write_line(f"criterion {num} ({label}): {status}")
