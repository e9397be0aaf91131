import pytest

_verdicts: dict[int, tuple[str, str]] = {}


class Criterion:
    def __init__(self, number: int, title: str):
        self.number, self.title = number, title

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        verdict = "FAIL" if exc_type is not None else "PASS"
        _verdicts[self.number] = (verdict, self.title)
        print(f"criterion {self.number}: {verdict} {self.title}")
        return False


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_verdicts):
        verdict, title = _verdicts[number]
        terminalreporter.write_line(f"criterion {number}: {verdict} {title}")
