import pytest

_LOG_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LOG_KEY] = []


@pytest.fixture
def acceptance_log(request):
    """Collects ``(criterion, passed, detail)`` lines printed after the run."""
    return request.config.stash[_LOG_KEY]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = sorted(config.stash[_LOG_KEY], key=lambda r: r[0])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in lines:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {detail}")
