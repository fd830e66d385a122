import numpy as np
import pytest

from abssgd.models import Model, generate_synthetic
from abssgd.numeric import RngStream

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def small_data():
    data, w = generate_synthetic(5, 60, 0.1, RngStream(11, 0))
    return data, w


@pytest.fixture
def logistic5():
    return Model("logistic", 5)


@pytest.fixture
def mlp5():
    return Model("mlp", 5, width=4)


def central_diff(fn, x, h=1e-6):
    """Central finite differences of a scalar function."""
    x = np.array(x, dtype=np.float64)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return out
