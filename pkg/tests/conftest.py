import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from extrapush import graph as G  # noqa: E402
from extrapush.objective import generate_experiment  # noqa: E402


@pytest.fixture(scope="session")
def net5():
    m = G.five_node_mixing()
    return G.five_node_graph(), m, G.stationary_distribution(m)


@pytest.fixture(scope="session")
def ls_exp():
    return generate_experiment("ls", n=5, p=256, m=100, seed=0)


@pytest.fixture(scope="session")
def huber_exp():
    return generate_experiment("huber", n=5, p=256, m=100, seed=0, xi=2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_ls(n, p=4, m=6, seed=0):
    """A small well-conditioned least-squares suite for fast runs."""
    from extrapush.objective import LeastSquares, LeastSquaresData
    r = np.random.default_rng(seed)
    blocks = [r.standard_normal((m, p)) / np.sqrt(m) for _ in range(n)]
    rhs = [r.standard_normal(m) for _ in range(n)]
    return LeastSquares(LeastSquaresData(blocks, rhs))


# -- acceptance report ------------------------------------------------------

ACCEPTANCE = {}


def record_acceptance(num, title, ok, detail):
    ACCEPTANCE[num] = (title, ok, detail)
    print(f"criterion {num:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
