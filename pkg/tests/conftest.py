import numpy as np
import pytest

from egc2.graphs import Graph


def graph_from_edges(edges, n=None, label=0, gid=0, feature_dim=1):
    """Build a Graph from an undirected edge list with constant features."""
    if n is None:
        n = max(max(e) for e in edges) + 1 if edges else 1
    adj = np.zeros((n, n))
    for i, j in edges:
        adj[i, j] = adj[j, i] = 1.0
    return Graph(id=gid, adjacency=adj,
                 features=np.ones((n, feature_dim)), label=label)


def random_graph(rng, n, p=0.4, gid=0, ensure_edge=True):
    """Erdos-Renyi graph; optionally guarantees at least one edge."""
    adj = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                adj[i, j] = adj[j, i] = 1.0
    if ensure_edge and adj.sum() == 0 and n >= 2:
        adj[0, 1] = adj[1, 0] = 1.0
    return Graph(id=gid, adjacency=adj, features=np.ones((n, 1)), label=0)


def connected_random_graph(rng, n, p=0.4, gid=0):
    """Random graph with no isolated nodes (every node gets >= 1 edge)."""
    adj = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                adj[i, j] = adj[j, i] = 1.0
    for i in range(n):
        if adj[i].sum() == 0:
            j = (i + 1) % n
            adj[i, j] = adj[j, i] = 1.0
    return Graph(id=gid, adjacency=adj, features=np.ones((n, 1)), label=0)


@pytest.fixture
def triangle():
    return graph_from_edges([(0, 1), (0, 2), (1, 2)])


@pytest.fixture
def path3():
    return graph_from_edges([(0, 1), (1, 2)])


@pytest.fixture
def star4():
    # K1,3: hub 0 with leaves 1..3
    return graph_from_edges([(0, 1), (0, 2), (0, 3)])
