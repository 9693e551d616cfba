import math
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from purcellbell.bell import CoincidenceTable

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

# measured coincidences: rows phi_b in (0, pi/2, pi, 3pi/2), columns phi_a in (-pi/4, pi/4, 3pi/4, 5pi/4)
PHI_A_COLUMNS = (-math.pi / 4, math.pi / 4, 3 * math.pi / 4, 5 * math.pi / 4)
PHI_B_ROWS = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)
MEASURED_COUNTS = (
    (190, 205, 46, 40),
    (256, 38, 24, 160),
    (60, 56, 206, 239),
    (39, 209, 220, 49),
)


@pytest.fixture
def measured_table() -> CoincidenceTable:
    t = CoincidenceTable()
    for pb, row in zip(PHI_B_ROWS, MEASURED_COUNTS):
        for pa, n in zip(PHI_A_COLUMNS, row):
            t.set(pa, pb, n)
    return t


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""
    def _report(number: int, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
