"""Shared fixtures and test configuration."""

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from ppsl.graph import Community, CommunitySet, Graph, ROLE_GROUND_TRUTH

torch.set_num_threads(1)

settings.register_profile(
    "suite",
    derandomize=True,
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

ACCEPTANCE_LOG = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LOG:
        terminalreporter.write_line(line)


def make_path_graph(n: int) -> Graph:
    edges = [(i, i + 1) for i in range(n - 1)]
    return Graph(n, edges)


def make_clique_graph(sizes) -> tuple:
    """Disjoint cliques; returns (graph, ground-truth CommunitySet)."""
    edges = []
    comms = []
    start = 0
    for size in sizes:
        nodes = list(range(start, start + size))
        edges.extend((u, v) for i, u in enumerate(nodes) for v in nodes[i + 1 :])
        comms.append(Community(frozenset(nodes)))
        start += size
    g = Graph(start, edges)
    return g, CommunitySet(tuple(comms), ROLE_GROUND_TRUTH)


def make_bridged_cliques(size: int = 5) -> tuple:
    """Two cliques joined by a single bridge edge."""
    g, truth = make_clique_graph([size, size])
    edges = [tuple(e) for e in g.edges] + [(size - 1, size)]
    return Graph(2 * size, edges), truth


@pytest.fixture
def path5() -> Graph:
    return make_path_graph(5)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def gen() -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(1234)
    return g
