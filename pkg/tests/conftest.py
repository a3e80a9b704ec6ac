import pytest

_LINES = []


@pytest.fixture
def criterion_line():
    """Record a one-line PASS/FAIL verdict; the lines are repeated in the
    terminal summary so they survive output capture."""

    def emit(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        _LINES.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[2].rstrip(":").split(".")[0])):
            terminalreporter.write_line(line)
