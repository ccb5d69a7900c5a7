"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""
import pytest

_RESULTS = {}


@pytest.fixture
def detail(request):
    """Call ``detail("...")`` inside an acceptance test to annotate its summary line."""
    def add(text):
        request.node.user_properties.append(("detail", text))
    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    cid, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        passed = report.passed and not hasattr(report, "wasxfail")
        notes = [v for k, v in item.user_properties if k == "detail"]
        _RESULTS[cid] = (passed, title, "; ".join(notes))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_RESULTS, key=lambda c: int(c[2:])):
        passed, title, notes = _RESULTS[cid]
        line = f"{cid} {'PASS' if passed else 'FAIL'} {title}"
        if notes:
            line += f" [{notes}]"
        terminalreporter.write_line(line)
