from __future__ import annotations

import pytest
from hypothesis import settings

# Lookup tables are built lazily on first use, so per-example timing is noisy.
settings.register_profile("default", deadline=None)
settings.load_profile("default")

_verdicts: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for the acceptance summary, then return ``ok``."""
    def record(label: str, ok: bool, detail: str) -> bool:
        _verdicts.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        print(_verdicts[-1])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for line in _verdicts:
            terminalreporter.write_line(line)
