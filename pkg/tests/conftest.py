import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from selfaffine.words import IFSSpec

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

THIRD = 1.0 / 3.0


def cantor_spec(p=(0.5, 0.5)):
    return IFSSpec([[[THIRD]], [[THIRD]]], list(p), [[0.0], [2.0 * THIRD]])


def planar_spec():
    return IFSSpec([np.diag([0.4, 0.3])] * 3, [THIRD, THIRD, 1 - 2 * THIRD])


def generic_spec():
    """Non-diagonal planar pair: no closed form, finite-n path."""
    return IFSSpec([[[0.5, 0.2], [0.1, 0.4]], [[0.3, -0.1], [0.2, 0.5]]], [0.3, 0.7])


def random_ordered_diagonal(rng, d=None, m=None):
    d = d or int(rng.integers(1, 4))
    m = m or int(rng.integers(2, 5))
    base = np.sort(rng.uniform(0.1, 0.6, d))[::-1]
    mats = []
    for _ in range(m):
        ent = np.sort(rng.uniform(0.05, 0.6, d))[::-1]
        mats.append(np.diag(ent if d > 1 else base[:1] * rng.uniform(0.3, 1.0)))
    p = rng.dirichlet(np.ones(m))
    p = p / p.sum()
    p[-1] = 1.0 - p[:-1].sum()
    return IFSSpec(mats, p)


@pytest.fixture
def cantor():
    return cantor_spec()


@pytest.fixture
def planar():
    return planar_spec()


@pytest.fixture
def generic():
    return generic_spec()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
