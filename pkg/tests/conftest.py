import pytest

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict; it is also asserted by the caller."""
    def record(number: int, ok: bool, detail: str) -> bool:
        request.config.stash[_RESULTS].append((number, bool(ok), detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    results = sorted(config.stash.get(_RESULTS, []))
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in results:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}: {detail}")
