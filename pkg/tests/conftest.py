import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pearl.dataset import Dataset

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def cycle_pair():
    """Two observations each strictly revealed preferred to the other."""
    x = np.array([[2.0, 1.0], [3.0, 0.0]])
    p = np.array([[1.0, 2.0], [2.0, 1.0]])
    return Dataset(x, p, np.einsum("ij,ij->i", p, x))


@pytest.fixture
def unrelated_pair():
    """Two observations with no revealed preference either way."""
    x = np.array([[1.0, 2.0], [2.0, 1.0]])
    p = np.array([[2.0, 1.0], [1.0, 2.0]])
    return Dataset(x, p, np.einsum("ij,ij->i", p, x))


ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(line)
