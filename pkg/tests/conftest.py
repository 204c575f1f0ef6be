import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion; all lines print in the terminal summary."""

    def record(number: int, title: str, checks: dict[str, bool], detail: str = "") -> bool:
        ok = all(checks.values())
        failed = [k for k, v in checks.items() if not v]
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}"
        if detail:
            line += f" | {detail}"
        if failed:
            line += f" | failed: {', '.join(failed)}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
