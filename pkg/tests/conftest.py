import numpy as np
import pytest

from hypyr.frameworks import CoefficientTable
from hypyr.pyramid_models import SparsitySchedule
from hypyr.uniwavelet import HaarBasis

# 243 models in total, 240 of them with cut level 1
BUDGETS_240 = {(1, 0): 1, (1, 1): 2, (1, 2): 1}

# about 10**4 models; nested, so oracle errors are monotone in ell1
BUDGETS_NESTED = {
    (1, 0): 1, (1, 1): 1, (1, 2): 1, (1, 3): 1,
    (2, 0): 2, (2, 1): 1, (2, 2): 1,
    (3, 0): 2, (3, 1): 1,
    (4, 0): 2,
}


@pytest.fixture(scope="session")
def haar():
    return HaarBasis()


@pytest.fixture(scope="session")
def schedule240(haar):
    return SparsitySchedule.custom(haar, 2, 3, BUDGETS_240)


@pytest.fixture(scope="session")
def schedule_nested(haar):
    return SparsitySchedule.custom(haar, 2, 4, BUDGETS_NESTED)


def random_table(layout, rng, scale=0.3):
    beta = rng.normal(0.0, scale, layout.size)
    sigma2 = rng.uniform(0.0, 2.0, layout.size)
    return CoefficientTable(layout, beta, sigma2)


_CRITERIA_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line ``criterion N: PASS|FAIL name (detail)``."""
    lines = request.config.stash.setdefault(_CRITERIA_KEY, [])

    def record(number, name, ok, detail=""):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} {name}" + (f" ({detail})" if detail else "")
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
