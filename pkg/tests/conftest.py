from collections import defaultdict

import pytest

_CRITERIA = {}
_OUTCOMES = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers",
                            "acceptance(number, title): check belonging to an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    _CRITERIA[number] = title
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _OUTCOMES[number].append((item.name, report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        checks = _OUTCOMES[number]
        passed = sum(ok for _, ok in checks)
        verdict = "PASS" if checks and passed == len(checks) else "FAIL"
        terminalreporter.write_line(
            f"criterion {number} [{verdict}] {_CRITERIA[number]} ({passed}/{len(checks)} checks)")
        for name, ok in checks:
            if not ok:
                terminalreporter.write_line(f"    failed: {name}")
