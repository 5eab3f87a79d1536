"""Shared pytest plumbing for the acceptance suite.

Tests marked ``@pytest.mark.criterion(n, label)`` each get one PASS/FAIL
line in the terminal summary, together with whatever measurement detail
the test recorded via ``record_detail``.  The summary prints after the
normal pytest output so the per-criterion verdicts survive output capture.
"""

import pytest

_results = {}
_details = {}


def record_detail(criterion: int, text: str):
    _details[criterion] = text


@pytest.fixture
def record(request):
    """Attach a measurement detail to the caller's criterion line."""
    marker = request.node.get_closest_marker("criterion")
    assert marker is not None, "record requires the criterion marker"

    def _record(text: str):
        record_detail(marker.args[0], text)

    return _record


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(n, label): acceptance criterion identity"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, label = marker.args
    if report.when == "call":
        _results[(n, label)] = report.outcome
    elif report.outcome != "passed":  # setup error / skip counts as fail
        _results.setdefault((n, label), report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for (n, label), outcome in sorted(_results.items()):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        detail = _details.get(n, "")
        suffix = f" -- {detail}" if detail else ""
        terminalreporter.write_line(f"criterion {n} ({label}): {verdict}{suffix}")
