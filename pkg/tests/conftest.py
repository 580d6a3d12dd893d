import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record a one-line verdict for an acceptance criterion and return ``ok``."""

    def record(number, ok, detail, notes=()):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        ACCEPTANCE_LINES.extend(f"    {n}" for n in notes)
        print(line)
        for n in notes:
            print(f"    {n}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
