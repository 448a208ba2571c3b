import numpy as np
import pytest

from graphrobust.data import CsbmParams, make_split, sample_csbm
from graphrobust.graph import Graph


def random_graph(rng, n, d=4, c=3, p=0.3) -> Graph:
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    if not edges:
        edges = [(0, 1)]
    return Graph(n, np.array(edges), rng.normal(size=(n, d)),
                 rng.integers(0, c, n), c)


@pytest.fixture
def small_graph():
    return random_graph(np.random.default_rng(42), n=8)


@pytest.fixture(scope="session")
def csbm_small():
    """Dense-enough heterophilic block model for attack/training tests."""
    graph = sample_csbm(CsbmParams(n=300, p_in=0.005, q_out=0.021, seed=1))
    split = make_split(graph, 20, 20, 0.10, True, seed=1)
    return graph, split


@pytest.fixture(scope="session")
def csbm_transductive():
    graph = sample_csbm(CsbmParams(n=300, p_in=0.005, q_out=0.021, seed=3))
    split = make_split(graph, 20, 20, 0.10, False, seed=3)
    return graph, split
