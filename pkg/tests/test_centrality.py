from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest

from egc2.centrality import EdgeScoreVector, edge_importance, node_centrality
from egc2.graphs import Graph, canonical_edges, line_graph

from conftest import graph_from_edges, random_graph


# ---------------------------------------------------------------------------
# Naive-definition oracles, kept deliberately independent of the kernels:
# distances via Floyd-Warshall, betweenness via exhaustive path enumeration.
# ---------------------------------------------------------------------------

def floyd_warshall(adj):
    n = adj.shape[0]
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    dist[adj > 0] = 1.0
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if dist[i, k] + dist[k, j] < dist[i, j]:
                    dist[i, j] = dist[i, k] + dist[k, j]
    return dist


def naive_closeness(adj):
    dist = floyd_warshall(adj)
    n = adj.shape[0]
    out = np.zeros(n)
    for v in range(n):
        finite = np.isfinite(dist[v]) & (dist[v] > 0)
        if finite.any():
            out[v] = finite.sum() / dist[v][finite].sum()
    return out


def all_paths(adj, s, t):
    """Every simple path from s to t, by depth-first enumeration."""
    paths = []
    stack = [(s, [s])]
    while stack:
        v, path = stack.pop()
        if v == t:
            paths.append(path)
            continue
        for w in np.nonzero(adj[v])[0]:
            if w not in path:
                stack.append((int(w), path + [int(w)]))
    return paths

def naive_betweenness(adj):
    n = adj.shape[0]
    score = [Fraction(0)] * n
    for s in range(n):
        for t in range(s + 1, n):
            paths = all_paths(adj, s, t)
            if not paths:
                continue
            shortest = min(len(p) for p in paths)
            geodesics = [p for p in paths if len(p) == shortest]
            for v in range(n):
                if v in (s, t):
                    continue
                through = sum(1 for p in geodesics if v in p)
                score[v] += Fraction(through, len(geodesics))
    return np.array([float(x) for x in score])


def naive_clustering(adj):
    n = adj.shape[0]
    out = np.zeros(n)
    for v in range(n):
        nbrs = list(np.nonzero(adj[v])[0])
        d = len(nbrs)
        if d < 2:
            continue
        closed = sum(
            1 for a in range(d) for b in range(a + 1, d)
            if adj[nbrs[a], nbrs[b]] > 0)
        out[v] = closed / (d * (d - 1) / 2)
    return out


def components_of(adj):
    n = adj.shape[0]
    seen, comps = set(), []
    for start in range(n):
        if start in seen:
            continue
        stack, members = [start], set()
        while stack:
            v = stack.pop()
            if v in members:
                continue
            members.add(v)
            stack.extend(int(w) for w in np.nonzero(adj[v])[0])
        seen |= members
        comps.append(sorted(members))
    return comps


def assert_eigen_residual(adj, vec, bound=1e-8):
    for members in components_of(adj):
        idx = np.array(members)
        block = adj[np.ix_(idx, idx)]
        v = vec[idx]
        assert abs(np.linalg.norm(v) - 1.0) <= 1e-12
        lam = v @ block @ v
        assert np.max(np.abs(block @ v - lam * v)) <= bound


# ---------------------------------------------------------------------------
# Spec examples
# ---------------------------------------------------------------------------

class TestNodeCentralityExamples:
    def test_triangle_clustering(self, triangle):
        assert np.array_equal(node_centrality(triangle, "c"), [1, 1, 1])

    def test_path_betweenness(self, path3):
        expected = naive_betweenness(path3.adjacency)
        assert np.array_equal(expected, [0, 1, 0])
        assert np.array_equal(node_centrality(path3, "bc"), expected)

    def test_triangle_eigenvector(self, triangle):
        got = node_centrality(triangle, "ec")
        assert np.allclose(got, np.full(3, 1 / np.sqrt(3)), atol=1e-10)

    def test_path_closeness(self, path3):
        expected = naive_closeness(path3.adjacency)
        assert np.allclose(expected, [2 / 3, 1, 2 / 3], atol=0)
        assert np.array_equal(node_centrality(path3, "cc"), expected)

    def test_degree_centrality(self, star4):
        assert np.array_equal(node_centrality(star4, "dc"),
                              [1, 1 / 3, 1 / 3, 1 / 3])

    def test_single_node_degenerate(self):
        g = Graph(id=0, adjacency=np.zeros((1, 1)),
                  features=np.ones((1, 1)), label=0)
        assert node_centrality(g, "dc") == [0]
        assert node_centrality(g, "cc") == [0]
        assert node_centrality(g, "c") == [0]
        assert node_centrality(g, "ec") == [1]

    def test_unknown_kind_rejected(self, triangle):
        with pytest.raises(ValueError, match="unknown centrality kind"):
            node_centrality(triangle, "pagerank")


class TestEdgeImportanceExamples:
    def test_star_clustering_is_triangle(self, star4):
        scores = edge_importance(star4, "c")
        assert np.array_equal(scores.values, [1, 1, 1])

    def test_path_degree(self, path3):
        scores = edge_importance(path3, "dc")
        assert np.array_equal(scores.values, [1, 1])

    def test_four_cycle_betweenness(self):
        g = graph_from_edges([(0, 1), (1, 2), (2, 3), (0, 3)])
        oracle = naive_betweenness(line_graph(g).adjacency)
        assert np.array_equal(oracle, [0.5, 0.5, 0.5, 0.5])
        assert np.array_equal(edge_importance(g, "bc").values, oracle)

    def test_alignment_with_canonical_edges(self):
        rng = np.random.default_rng(5)
        g = random_graph(rng, 7)
        scores = edge_importance(g, "cc")
        assert len(scores) == len(canonical_edges(g))
        assert scores.graph_id == g.id


# ---------------------------------------------------------------------------
# Oracle equivalence and structural properties on random graphs
# ---------------------------------------------------------------------------

class TestOracleEquivalence:
    def test_small_random_graphs(self):
        rng = np.random.default_rng(42)
        for _ in range(40):
            g = random_graph(rng, int(rng.integers(2, 9)),
                             p=float(rng.uniform(0.2, 0.8)),
                             ensure_edge=False)
            adj = g.adjacency
            assert np.max(np.abs(
                node_centrality(g, "bc") - naive_betweenness(adj))) <= 1e-12
            assert np.max(np.abs(
                node_centrality(g, "cc") - naive_closeness(adj))) <= 1e-12
            assert np.max(np.abs(
                node_centrality(g, "c") - naive_clustering(adj))) <= 1e-12
            assert_eigen_residual(adj, node_centrality(g, "ec"))

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(9)
        g = random_graph(rng, 6, p=0.5)
        for perm in list(permutations(range(6)))[::60]:
            p = np.array(perm)
            adj = g.adjacency[np.ix_(p, p)]
            pg = Graph(id=0, adjacency=adj, features=np.ones((6, 1)), label=0)
            for kind in ("cc", "bc", "c", "dc"):
                base = node_centrality(g, kind)
                assert np.array_equal(node_centrality(pg, kind), base[p])
            base = node_centrality(g, "ec")
            assert np.allclose(node_centrality(pg, "ec"), base[p], atol=1e-12)

    def test_eigenvector_normalized_per_component(self):
        # two disjoint triangles: both components keep unit-norm vectors
        g = graph_from_edges(
            [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)], n=6)
        v = node_centrality(g, "ec")
        assert np.all(v >= 0)
        assert abs(np.linalg.norm(v[:3]) - 1) <= 1e-12
        assert abs(np.linalg.norm(v[3:]) - 1) <= 1e-12


class TestEdgeScoreVector:
    def test_rejects_negative_centrality(self):
        with pytest.raises(ValueError, match="nonnegative"):
            EdgeScoreVector(kind="cc", values=np.array([-0.1]), graph_id=0)

    def test_grad_kind_allows_negative(self):
        v = EdgeScoreVector(kind="grad", values=np.array([-0.1]), graph_id=0)
        assert v.values[0] == -0.1

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="finite"):
            EdgeScoreVector(kind="cc", values=np.array([np.nan]), graph_id=0)

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown score kind"):
            EdgeScoreVector(kind="katz", values=np.array([1.0]), graph_id=0)
