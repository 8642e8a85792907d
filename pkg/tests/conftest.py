import re

import pytest

# criterion number -> (outcome, detail) for the acceptance summary
_CRITERIA = {}
_DETAILS = {}


@pytest.fixture
def record():
    """Store a one-line measurement for the acceptance summary of the calling test."""

    def _record(number, text):
        _DETAILS.setdefault(number, []).append(text)

    return _record


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _CRITERIA.get(n, "PASS")
        _CRITERIA[n] = "PASS" if prev == "PASS" and report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        detail = "; ".join(_DETAILS.get(n, []))
        tr.write_line(f"criterion {n:2d}: {_CRITERIA[n]}" + (f"  ({detail})" if detail else ""))
