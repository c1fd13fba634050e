"""Collects acceptance outcomes and prints one line per criterion after the run."""

import pytest

_RESULTS: dict[int, tuple[str, str, float, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    n, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _RESULTS[n] = (title, "PASS" if report.passed else "FAIL", report.duration, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        title, verdict, duration, detail = _RESULTS[n]
        line = f"criterion {n:2d} {verdict}  {title} ({duration:.1f} s)"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
