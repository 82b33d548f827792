import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance verdict line, shown in the terminal summary."""
    def emit(criterion: str, ok: bool, detail: str) -> None:
        _LINES.append(f"criterion {criterion:<3} {'PASS' if ok else 'FAIL'}  {detail}")
    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
