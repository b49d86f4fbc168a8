import pytest

_LINES: list[str] = []


@pytest.fixture
def criterion_line():
    """Record one PASS/FAIL line; the lines are repeated in the terminal summary."""
    def record(number: int, ok: bool, text: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {text}"
        _LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
