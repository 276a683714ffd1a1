from __future__ import annotations

import numpy as np
import pytest

from ncpbound.graph import Graph
from ncpbound.graphgen import random_connected

SUITE_SIZE = 20
SUITE_MUS = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5)


def complete(n: int) -> Graph:
    u, v = np.triu_indices(n, 1)
    return Graph.from_edges(n, u, v)


def cycle(n: int) -> Graph:
    u = np.arange(n)
    return Graph.from_edges(n, u, (u + 1) % n)


def path(n: int) -> Graph:
    u = np.arange(n - 1)
    return Graph.from_edges(n, u, u + 1)


def star(leaves: int) -> Graph:
    return Graph.from_edges(leaves + 1, np.zeros(leaves, dtype=int), np.arange(1, leaves + 1))


def barbell() -> Graph:
    """Two K4s joined by the edge 3-4."""
    u, v = np.triu_indices(4, 1)
    uu = np.concatenate([u, u + 4, [3]])
    vv = np.concatenate([v, v + 4, [4]])
    return Graph.from_edges(8, uu, vv)


def k4_pendant() -> Graph:
    u, v = np.triu_indices(4, 1)
    return Graph.from_edges(5, np.append(u, 0), np.append(v, 4))


def suite_graph(i: int) -> Graph:
    n = int(np.random.default_rng(1000 + i).integers(6, 13))
    return random_connected(n, 0.4, i)


def suite() -> list[Graph]:
    return [suite_graph(i) for i in range(SUITE_SIZE)]


@pytest.fixture
def k4() -> Graph:
    return complete(4)


@pytest.fixture
def bar() -> Graph:
    return barbell()


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
