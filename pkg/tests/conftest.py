import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    def report(criterion, passed, detail=""):
        """``passed=None`` records a skipped criterion."""
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        line = f"criterion {criterion}: {status}  {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
