import pathlib
import sys

import pytest

# make tests/oracles.py importable as a plain module
sys.path.insert(0, str(pathlib.Path(__file__).parent))

# acceptance checks append "criterion N: PASS/FAIL ..." lines here
ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def _merged(lines):
    """One line per criterion; a criterion checked by several tests passes only if all do."""
    parts = {}
    for line in lines:
        head, _, rest = line.partition(": ")
        status, _, text = rest.partition(" ")
        parts.setdefault(int(head.split()[1]), []).append((status, text))
    for number in sorted(parts):
        status = "PASS" if all(s == "PASS" for s, _ in parts[number]) else "FAIL"
        yield f"criterion {number}: {status} " + "; ".join(t for _, t in parts[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _merged(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
