"""Collects the acceptance criterion lines and prints them after the run."""

import pytest

_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line and assert on it."""

    def report(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _LINES.append(line)
        print(line)
        assert passed, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES):
            terminalreporter.write_line(line)
