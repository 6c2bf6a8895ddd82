from __future__ import annotations

from collections.abc import Callable

import pytest

_CRITERIA = pytest.StashKey[list[str]]()


@pytest.fixture
def criterion(request: pytest.FixtureRequest) -> Callable[[int, bool, str], bool]:
    """Record one pass/fail line for an acceptance criterion; lines are repeated in the terminal summary."""
    lines = request.config.stash.setdefault(_CRITERIA, [])

    def emit(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter: pytest.TerminalReporter, config: pytest.Config) -> None:
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
