"""Shared pytest hooks: acceptance verdict lines are repeated in the terminal summary."""

import pytest

_VERDICTS: dict[int, str] = {}


@pytest.fixture(scope="session")
def verdicts():
    return _VERDICTS


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])
