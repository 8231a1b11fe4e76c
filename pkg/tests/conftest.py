"""Collects one PASS/FAIL line per acceptance criterion and prints them at the end."""
import pytest

_LINES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config.stash[_LINES] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when == "teardown":
        return
    if report.when == "setup" and report.passed:
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if report.when == "setup":
        detail = f"setup failed: {call.excinfo.typename if call.excinfo else report.outcome}"
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    item.config.stash[_LINES][marker.args[0]] = (status, item.name, detail)


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        status, name, detail = lines[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {name}  {detail}".rstrip())
