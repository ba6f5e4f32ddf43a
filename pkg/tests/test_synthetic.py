import numpy as np
import pytest

from egc2.centrality import edge_importance
from egc2.graphs import canonical_edges
from egc2.synthetic import make_benchmark


class TestBenchmarkGenerator:
    def test_ptc_like_statistics(self):
        ds = make_benchmark("ptc-like", seed=0)
        assert len(ds) == 344
        assert ds.num_classes == 2
        labels = ds.labels()
        assert int(labels.sum()) == 172
        sizes = np.array([g.n for g in ds])
        assert 10 <= sizes.mean() <= 18

    def test_proteins_like_statistics(self):
        ds = make_benchmark("proteins-like", seed=0)
        assert len(ds) == 300
        sizes = np.array([g.n for g in ds])
        assert 30 <= sizes.mean() <= 55

    def test_deterministic(self):
        a = make_benchmark("ptc-like", seed=9)
        b = make_benchmark("ptc-like", seed=9)
        for x, y in zip(a, b):
            assert np.array_equal(x.adjacency, y.adjacency)
            assert x.label == y.label

    def test_unknown_profile(self):
        with pytest.raises(ValueError, match="unknown profile"):
            make_benchmark("mutag-like")

    def test_graphs_are_valid_and_connected_enough(self):
        ds = make_benchmark("ptc-like", seed=1)
        for g in ds.graphs[:50]:
            assert g.num_edges >= 1
            assert g.degrees().min() >= 1
            assert len(canonical_edges(g)) == g.num_edges

    def test_core_edges_outrank_tail_edges_under_clustering(self):
        # the compression signal: triangle-core edges carry line-graph
        # clustering while pendant tails carry none
        ds = make_benchmark("ptc-like", seed=2)
        positive = 0
        for g in ds.graphs[:20]:
            values = edge_importance(g, "c").values
            positive += int(values.max() > 0 and values.min() == 0)
        assert positive >= 18

    def test_size_overlap_between_classes(self):
        # class must not be readable from node counts alone
        ds = make_benchmark("ptc-like", seed=0)
        n0 = sorted(g.n for g in ds if g.label == 0)
        n1 = sorted(g.n for g in ds if g.label == 1)
        lo, hi = max(n0[0], n1[0]), min(n0[-1], n1[-1])
        overlap = [n for n in n0 + n1 if lo <= n <= hi]
        assert len(overlap) >= len(ds) // 2
