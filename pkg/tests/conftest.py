import pytest

# one line per acceptance criterion, printed at the end of the session
VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    def record(label: str, passed: bool, detail: str) -> bool:
        VERDICTS.append(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
