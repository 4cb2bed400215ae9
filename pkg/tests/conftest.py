import pytest

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report(capsys):
    """Print one acceptance line immediately and keep it for the session summary."""

    def emit(number: int, passed: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
