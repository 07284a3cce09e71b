import pytest

_LINES: list[str] = []
_INFO: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one PASS/FAIL line; lines are echoed live and again in the summary."""

    def record(criterion: int, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}"
        _LINES.append(line)
        print(line)
        return passed

    def info(text: str) -> None:
        _INFO.append(f"INFO {text}")
        print(f"INFO {text}")

    record.info = info
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
        for line in _INFO:
            terminalreporter.write_line(line)
