import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ymlab import equivariant as E
from ymlab import soliton as S

settings.register_profile("ymlab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ymlab")

DIMS = (5, 6, 7, 8, 9)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grid():
    return E.RadialGrid(96, 20.0, 0.1)


@pytest.fixture(scope="session")
def params5():
    return S.constants(5)


@pytest.fixture(scope="session")
def op5(grid, params5):
    return E.reduce_L(grid, params5)


@pytest.fixture(scope="session")
def basis5(op5):
    return E.spectrum(op5, 10)


def random_points(rng, count, n, radius=10.0):
    d = rng.normal(size=(count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * radius * rng.uniform(0, 1, size=(count, 1)) ** (1.0 / n)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance criterion lines at the end of the run."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
