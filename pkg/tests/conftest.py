import pytest

_LINES: list[str] = []


class Verdicts:
    """Collects one line per acceptance criterion and fails the test on a miss."""

    def record(self, number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _LINES.append(line)
        print(line)
        assert ok, line


@pytest.fixture
def verdict() -> Verdicts:
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES):
            terminalreporter.write_line(line)
