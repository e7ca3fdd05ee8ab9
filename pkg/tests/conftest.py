import os

import numpy as np
import pytest

from frogmodel.engine import VALIDATE_ENV
from frogmodel.randomness import InitialConfigSpec

# every engine run made by the test suite, including runs in worker
# processes, is checked for containment and conservation
os.environ[VALIDATE_ENV] = "1"


def sigma3(p: float, n: int) -> float:
    """Three binomial standard deviations of a frequency estimate."""
    return 3.0 * np.sqrt(p * (1.0 - p) / n)


@pytest.fixture
def bern2():
    return InitialConfigSpec.bernoulli(2, 0.5, master_seed=7)


@pytest.fixture
def one_per_site_1d():
    return InitialConfigSpec.constant(1, 1, master_seed=3)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion; missing verdicts count as FAIL."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])
    seen = []

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        lines.append((number, line))
        seen.append(number)
        return ok

    yield record
    if not seen:
        number = request.node.get_closest_marker("criterion").args[0]
        lines.append((number, f"FAIL criterion {number}: did not complete"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(line)
