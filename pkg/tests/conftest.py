import pytest

_LINES = []


@pytest.fixture
def verdict_line():
    """Print one ``criterion N: PASS|FAIL ...`` line and keep it for the session summary."""

    def emit(criterion, passed, detail=""):
        line = f"acceptance criterion {criterion}: {'PASS' if passed else 'FAIL'} {detail}".rstrip()
        print(line)
        _LINES.append(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance")
        for line in sorted(_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
