import pytest

# filled by test_acceptance.report(); echoed at the end of the run so the
# PASS/FAIL lines are visible even when stdout is captured
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_lines():
    return ACCEPTANCE_LINES
