import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record():
    """Log one acceptance line and return the pass flag for asserting."""
    def _record(cid: str, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {cid}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
