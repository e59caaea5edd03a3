import pytest

from gkelab.group import TOY

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def toy():
    return TOY


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
