"""Node centrality kernels and their lift to per-edge importance vectors.

Edge importance is node centrality evaluated on the line graph: entry j of
an edge score vector is the centrality of line-graph node j, which is the
j-th canonical edge of the source graph.

Betweenness uses exact rational arithmetic internally so results are
bitwise permutation-equivariant and match enumeration oracles exactly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from egc2.graphs import Graph, line_graph

CENTRALITY_KINDS = ("cc", "bc", "ec", "c", "dc")
SCORE_KINDS = CENTRALITY_KINDS + ("grad",)

POWER_ITERATION_MAX_STEPS = 1000
POWER_ITERATION_TOL = 1e-10


class AlignmentError(Exception):
    """A per-edge vector does not line up with the graph's edge list."""


@dataclass(frozen=True)
class EdgeScoreVector:
    """Per-edge real scores in canonical edge order."""

    kind: str
    values: np.ndarray
    graph_id: int

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {self.kind!r}")
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", values)
        if not np.all(np.isfinite(values)):
            raise ValueError("edge scores must be finite")
        if kind != "grad" and values.size and values.min() < 0:
            raise ValueError(f"{kind} scores must be nonnegative")

    def __len__(self) -> int:
        return len(self.values)


def _bfs_distances(adj: np.ndarray, source: int) -> np.ndarray:
    n = adj.shape[0]
    dist = np.full(n, -1, dtype=int)
    dist[source] = 0
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in np.nonzero(adj[v])[0]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(int(w))
    return dist


def _connected_components(adj: np.ndarray) -> list[np.ndarray]:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    components = []
    for start in range(n):
        if seen[start]:
            continue
        members = []
        queue = deque([start])
        seen[start] = True
        while queue:
            v = queue.popleft()
            members.append(v)
            for w in np.nonzero(adj[v])[0]:
                if not seen[w]:
                    seen[w] = True
                    queue.append(int(w))
        components.append(np.array(sorted(members), dtype=int))
    return components


def _closeness(adj: np.ndarray) -> np.ndarray:
    n = adj.shape[0]
    out = np.zeros(n)
    for v in range(n):
        dist = _bfs_distances(adj, v)
        reachable = dist > 0
        total = int(dist[reachable].sum())
        if total > 0:
            out[v] = int(reachable.sum()) / total
    return out


def _betweenness(adj: np.ndarray) -> np.ndarray:
    """Brandes accumulation with Fraction dependencies, each pair once."""
    n = adj.shape[0]
    neighbors = [np.nonzero(adj[v])[0].tolist() for v in range(n)]
    score = [Fraction(0)] * n
    for s in range(n):
        sigma = [0] * n
        dist = [-1] * n
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma[s] = 1
        dist[s] = 0
        order = []
        queue = deque([s])
        while queue:
            v = queue.popleft()
            order.append(v)
            for w in neighbors[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [Fraction(0)] * n
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += Fraction(sigma[v], sigma[w]) * (1 + delta[w])
            if w != s:
                score[w] += delta[w]
    # undirected accumulation counts (s, t) and (t, s); halve for one count
    return np.array([float(x / 2) for x in score])


def _eigenvector(adj: np.ndarray) -> np.ndarray:
    """Dominant-eigenvector entries per connected component, L2-normalized.

    Power iteration runs on A + I so bipartite components (where the +/-
    extreme eigenvalues tie in magnitude) still converge to the Perron
    vector of A; the eigenvectors are unchanged by the shift.
    """
    n = adj.shape[0]
    out = np.zeros(n)
    for members in _connected_components(adj):
        m = len(members)
        if m == 1:
            out[members[0]] = 1.0
            continue
        block = adj[np.ix_(members, members)] + np.eye(m)
        v = np.full(m, 1.0 / np.sqrt(m))
        for _ in range(POWER_ITERATION_MAX_STEPS):
            nxt = block @ v
            nxt /= np.linalg.norm(nxt)
            if np.max(np.abs(nxt - v)) <= POWER_ITERATION_TOL:
                v = nxt
                break
            v = nxt
        out[members] = np.abs(v)
    return out


def _clustering(adj: np.ndarray) -> np.ndarray:
    n = adj.shape[0]
    out = np.zeros(n)
    for v in range(n):
        nbrs = np.nonzero(adj[v])[0]
        d = len(nbrs)
        if d < 2:
            continue
        links = int(adj[np.ix_(nbrs, nbrs)].sum()) // 2
        out[v] = 2.0 * links / (d * (d - 1))
    return out


def _degree(adj: np.ndarray) -> np.ndarray:
    n = adj.shape[0]
    if n == 1:
        return np.zeros(1)
    return adj.sum(axis=1) / (n - 1)


_KERNELS = {
    "cc": _closeness,
    "bc": _betweenness,
    "ec": _eigenvector,
    "c": _clustering,
    "dc": _degree,
}


def node_centrality(graph: Graph, kind: str) -> np.ndarray:
    """Per-node centrality of the given kind, length n."""
    kind = kind.lower()
    if kind not in _KERNELS:
        raise ValueError(f"unknown centrality kind {kind!r}")
    return _KERNELS[kind](graph.adjacency)


def edge_importance(graph: Graph, kind: str) -> EdgeScoreVector:
    """Centrality of each canonical edge, measured on the line graph."""
    values = node_centrality(line_graph(graph), kind)
    return EdgeScoreVector(kind=kind, values=values, graph_id=graph.id)
