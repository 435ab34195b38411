import math

import numpy as np
import pytest

from dtzfp.config import SystemConfig


def bessel_j0(x, terms=40):
    """Power series of J0, independent of scipy."""
    return sum((-1) ** n * (x / 2) ** (2 * n) / math.factorial(n) ** 2 for n in range(terms))


@pytest.fixture
def cfg():
    return SystemConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


ACCEPTANCE_LINES = []


def record(name, ok, detail=""):
    """Log one acceptance criterion; the lines are echoed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
