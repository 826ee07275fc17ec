"""Shared acceptance-report plumbing.

The acceptance tests record one line per criterion; the terminal
summary prints the block after the run so the verdicts stay visible
even though pytest captures in-test output.
"""

CRITERION_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)
