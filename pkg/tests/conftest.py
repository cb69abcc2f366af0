import pytest

RESULTS = []


@pytest.fixture
def verdict():
    """Record a PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {label}" + (f": {detail}" if detail else "")
        RESULTS.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
