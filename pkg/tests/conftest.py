import pytest

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one acceptance-criterion verdict line.

    The line is echoed into the test's captured stdout (visible on failure)
    and replayed in a terminal-summary block after the run, where capture
    cannot swallow it.
    """

    def record(num: int, ok: bool, detail: str) -> None:
        status = "PASS" if ok else "FAIL"
        line = f"criterion {num:02d}: {status} — {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
