import os
import sys
import warnings

# allow thread-count tests to use 8 numba workers even on small machines;
# must happen before numba is imported
os.environ.setdefault("NUMBA_NUM_THREADS", "8")
warnings.filterwarnings("ignore", message=".*TBB.*")

sys.path.insert(0, os.path.dirname(__file__))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from anomnet.grid import GridSpec  # noqa: E402
from anomnet.ingest import DAYS, DailyField  # noqa: E402


@pytest.fixture
def small_grid():
    return GridSpec(3, 4, 30.0, 90.0, 60.0, 0.0)


def random_field(grid, n_years=3, seed=0, year_first=2000, missing_frac=0.0):
    rs = np.random.default_rng(seed)
    values = rs.normal(size=(n_years, DAYS, grid.node_count)).astype(np.float32)
    if missing_frac:
        from anomnet.ingest import MISSING

        values[rs.random(values.shape) < missing_frac] = MISSING
    return DailyField(grid, year_first, values)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def record_acceptance(request):
    """Print one PASS/FAIL line per criterion and keep it for the summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}"
        print(line)
        lines.append((number, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
