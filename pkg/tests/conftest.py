import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """Return a recorder that prints and keeps one PASS/FAIL line per criterion."""

    def record(k: int, ok: bool, detail: str) -> bool:
        line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return record
