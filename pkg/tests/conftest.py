"""Collects acceptance-criterion outcomes and prints one line per criterion."""
import pytest

_OUTCOMES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    failed = report.failed or (call.when == "call" and report.skipped)
    if call.when == "call" or failed:
        prev = _OUTCOMES.get(n)
        ok = not failed and (prev is None or prev[1])
        details = ", ".join(f"{k}={v}" for k, v in item.user_properties)
        _OUTCOMES[n] = (title, ok, details)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        title, ok, details = _OUTCOMES[n]
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}"
        if details:
            line += f"  ({details})"
        terminalreporter.write_line(line)
