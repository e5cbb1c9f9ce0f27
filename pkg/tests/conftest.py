import pytest

_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_KEY] = {}


@pytest.fixture
def acceptance(request):
    """Record ``(number, ok, summary)`` for the end-of-session acceptance table."""
    results = request.config.stash[_KEY]

    def record(number: int, ok: bool, summary: str) -> None:
        results[number] = (ok, summary)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, summary = results[number]
        terminalreporter.write_line(f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'} {summary}")
