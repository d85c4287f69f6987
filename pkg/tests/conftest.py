import sys

import pytest

_GATE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record and print one acceptance line; the caller still asserts."""

    def report(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} | {detail}"
        _GATE_LINES.append(line)
        sys.__stdout__.write("\n" + line + "\n")
        sys.__stdout__.flush()
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _GATE_LINES:
        terminalreporter.section("acceptance gate")
        for line in sorted(_GATE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
