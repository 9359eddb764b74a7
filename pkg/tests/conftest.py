import sys

import pytest


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    mod = sys.modules[request.module.__name__]

    def report(number, ok, detail):
        status = "PASS" if ok else "FAIL"
        line = f"criterion {number:>2}: {status}  {detail}"
        mod.RESULTS[number] = line
        print(line)
        assert ok, detail

    return report
