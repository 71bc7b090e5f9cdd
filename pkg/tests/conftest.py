import numpy as np
import pytest

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def record_criterion():
    """Record one acceptance result; the summary prints a line per criterion."""

    def record(name: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE.append((name, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
