import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from quasimetric import from_matrix, path_quasimetric  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_digraph(rng, n=8, p=0.5):
    edges = [(i, (i + 1) % n, float(rng.uniform(0.1, 1.0))) for i in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < p:
                edges.append((i, j, float(rng.uniform(0.1, 2.0))))
    return edges


@pytest.fixture
def small_quasi(rng):
    edges = random_digraph(rng, 9)
    return path_quasimetric(edges, 9, "small_quasi"), edges


@pytest.fixture
def small_metric(rng):
    P = rng.random((9, 2))
    D = np.sqrt(((P[:, None] - P[None]) ** 2).sum(-1))
    return from_matrix(D, "small_metric")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
