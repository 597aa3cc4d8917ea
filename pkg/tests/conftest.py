import pytest

ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


@pytest.fixture
def acceptance_line(request):
    """Record one summary line, printed after the run as well as inline."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def emit(line):
        lines.append(line)
        print(line)
    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: (len(s.split(":")[0]), s)):
            terminalreporter.write_line(line)
