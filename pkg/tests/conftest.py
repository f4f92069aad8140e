import pytest

_REPORT = []
_INFO = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line; it is printed now and again in the terminal summary."""
    def record(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        _REPORT.append((criterion, line))
        print(line)
        return ok
    return record


@pytest.fixture
def info():
    """Record an informational line that is not gated."""
    def record(line):
        _INFO.append(f"INFO {line}")
        print(_INFO[-1])
    return record


def pytest_terminal_summary(terminalreporter):
    if not _REPORT and not _INFO:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_REPORT, key=lambda item: item[0]):
        terminalreporter.write_line(line)
    for line in _INFO:
        terminalreporter.write_line(line)
