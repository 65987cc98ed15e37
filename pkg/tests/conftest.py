"""Shared pytest plumbing for the acceptance scoreboard.

Acceptance tests record one (pass, detail) entry per criterion on the
pytest config; the terminal summary prints them as a compact table so a
full run always ends with one line per criterion, pass or fail.
"""

import pytest


def pytest_configure(config):
    config._acceptance_lines = {}


@pytest.fixture(scope="session")
def acceptance_board(request):
    return request.config._acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(lines):
        ok, detail = lines[num]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {verdict} - {detail}")
