import pytest

_RESULTS: dict = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call with (number, passed, detail)."""

    def record(number, passed, detail):
        _RESULTS[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        passed, detail = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.when == "call" and report.failed:
        number = marker.args[0]
        passed, detail = _RESULTS.get(number, (False, "did not complete"))
        _RESULTS[number] = (False, detail if not passed else f"{detail}; assertion failed")
