import numpy as np
import pytest

from dirac_vacuum.fields import Grid3
from dirac_vacuum.pv import derive_scheme


@pytest.fixture
def scheme123():
    return derive_scheme((1.0, 2.0, 3.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_grid():
    return Grid3(4, 3.0)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Record one summary line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number, name, passed, elapsed, budget, detail):
        tag = "PASS" if passed else "FAIL"
        line = f"criterion {number:>2} [{tag}] {name}: {detail} ({elapsed:.1f}s, budget {budget:g}s)"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
