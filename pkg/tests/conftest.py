from __future__ import annotations

import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parent / "fixtures"
sys.path.insert(0, str(Path(__file__).resolve().parent))

# (number, title) -> (status, detail), filled in by test_acceptance.py
CRITERIA: dict[tuple[int, str], tuple[str, str]] = {}


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), (status, detail) in sorted(CRITERIA.items()):
        terminalreporter.write_line(f"[{status}] criterion {num}: {title}: {detail}")
