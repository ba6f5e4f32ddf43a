"""Deterministic synthetic benchmark corpora in TU format.

The public graph-classification benchmarks are not redistributable with
this package, so experiments and the acceptance suite run on seeded
stand-ins shaped like the benchmark statistics (graph counts, two
classes, comparable node counts). Real TU directories remain fully
supported by the loader.

Every graph is a triangle core with random pendant tails:

    class 0  windmill core: f triangles sharing a single hub
    class 1  chain core: f triangles glued in a path

Cores need at least three triangles; with two, both layouts collapse to
the same bowtie and the labels are unlearnable. Tails are drawn from the
same distribution for both classes and node labels are degree buckets
capped at 3, so neither size nor raw features give the class away and a
classifier has to read the core wiring. Core edges carry high line-graph
clustering while tail edges carry none, which is what makes
clustering-guided compression strip the periphery first and leave the
class signal alone.
"""

from __future__ import annotations

import numpy as np

from egc2.graphs import Graph, GraphDataset

PROFILES = ("ptc-like", "proteins-like")

DEGREE_LABEL_CAP = 3


def _windmill(edges: list, start: int, triangles: int) -> int:
    node = start + 1
    for _ in range(triangles):
        a, b = node, node + 1
        edges += [(start, a), (start, b), (a, b)]
        node += 2
    return node


def _chain(edges: list, start: int, triangles: int) -> int:
    for k in range(triangles):
        a, b, c = start + 2 * k, start + 2 * k + 1, start + 2 * k + 2
        edges += [(a, b), (b, c), (a, c)]
    return start + 2 * triangles + 1


def _motif_graph(rng: np.random.Generator, gid: int, label: int,
                 triangles: int, tail_nodes: int, max_tail_len: int) -> Graph:
    edges: list[tuple[int, int]] = []
    n = (_windmill(edges, 0, triangles) if label == 0
         else _chain(edges, 0, triangles))
    core_n = n
    remaining = tail_nodes
    while remaining > 0:
        length = int(min(remaining, rng.integers(1, max_tail_len + 1)))
        previous = int(rng.integers(0, core_n))
        for _ in range(length):
            edges.append((previous, n))
            previous = n
            n += 1
        remaining -= length

    adj = np.zeros((n, n))
    for i, j in edges:
        adj[i, j] = adj[j, i] = 1.0
    degrees = adj.sum(axis=1).astype(int)
    node_labels = tuple(int(min(d, DEGREE_LABEL_CAP)) for d in degrees)
    feats = np.zeros((n, DEGREE_LABEL_CAP + 1))
    feats[np.arange(n), np.minimum(degrees, DEGREE_LABEL_CAP)] = 1.0
    return Graph(id=gid, adjacency=adj, features=feats, label=label,
                 node_labels=node_labels)


def make_benchmark(profile: str, seed: int = 0) -> GraphDataset:
    """Seeded two-class corpus shaped like a named benchmark profile."""
    rng = np.random.default_rng(seed)
    if profile == "ptc-like":
        count, triangles = 344, (3, 4)
        tails, max_tail_len = (2, 9), 3
    elif profile == "proteins-like":
        count, triangles = 300, (3, 6)
        tails, max_tail_len = (15, 50), 15
    else:
        raise ValueError(f"unknown profile {profile!r}; "
                         f"expected one of {PROFILES}")

    labels = np.array([k % 2 for k in range(count)])
    labels = labels[rng.permutation(count)]
    graphs = []
    for gid, label in enumerate(labels):
        graphs.append(_motif_graph(
            rng, gid, int(label),
            triangles=int(rng.integers(triangles[0], triangles[1] + 1)),
            tail_nodes=int(rng.integers(tails[0], tails[1] + 1)),
            max_tail_len=max_tail_len))
    return GraphDataset(name=profile, graphs=graphs, num_classes=2,
                        feature_dim=DEGREE_LABEL_CAP + 1)
