import pytest

from mcsdecoy.channel import ChannelParams

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def channel():
    return ChannelParams()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
