"""Shared pytest wiring: the acceptance suite's end-of-run summary.

Acceptance tests record one PASS/FAIL line each; printing them from the
tests would be swallowed by pytest's capture for passing tests, so they
are replayed in a dedicated section after the terminal summary instead.
"""

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
