"""Gradient-based edge contribution and its agreement with importance.

The contribution of an edge is the absolute symmetrized gradient of the
true-label cross-entropy with respect to the adjacency entry, masked to
existing edges. Agreement between a contribution vector and a centrality
importance vector is their cosine similarity, which makes the index
invariant to positive rescaling of either side.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from egc2.centrality import AlignmentError, EdgeScoreVector, edge_importance
from egc2.graphs import Graph, canonical_edges

log = logging.getLogger(__name__)


class UntrainedModelError(RuntimeError):
    pass


def edge_contribution(model, graph: Graph) -> EdgeScoreVector:
    """Absolute symmetrized loss gradient per canonical edge (kind "grad").

    The gradient is taken on the raw adjacency entries, differentiated
    through the normalization; entries at non-edges are masked to zero
    before the per-edge read-off.
    """
    if not getattr(model, "trained", False):
        raise UntrainedModelError(
            "edge contribution requires a trained model; "
            "call train() or load a trained checkpoint first")
    _, grad, _ = model.loss_gradient(graph)
    n = graph.n
    g = grad[:n, :n]
    sym = 0.5 * (g + g.T) * graph.adjacency
    edges = canonical_edges(graph)
    values = np.array([abs(sym[i, j]) for i, j in edges])
    return EdgeScoreVector(kind="grad", values=values, graph_id=graph.id)


def eci(importance: EdgeScoreVector, contribution: EdgeScoreVector) -> float:
    """Cosine similarity of two aligned edge score vectors; 0 if either
    has zero norm."""
    if len(importance) != len(contribution):
        raise AlignmentError(
            f"vectors of length {len(importance)} and {len(contribution)}")
    if len(importance) == 0:
        raise AlignmentError("vectors must have length >= 1")
    a, b = importance.values, contribution.values
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def eci_delta(clean_mean: float, adv_mean: float) -> float:
    return clean_mean - adv_mean


def perturbation_importance_score(scores: EdgeScoreVector, edges,
                                  targets) -> dict[tuple[int, int], float]:
    """Affine rank map onto [0, 1]: the top-scored edge gets 1, the
    bottom edge 0. Ranks order by descending score, ties by ascending
    canonical edge index. ``edges`` is the graph's canonical edge list
    the scores are aligned with; ``targets`` must be a subset of it."""
    m = len(scores)
    if m != len(edges):
        raise AlignmentError(f"{m} scores for {len(edges)} edges")
    order = np.lexsort((np.arange(m), -scores.values))
    rank_of = np.empty(m, dtype=int)
    rank_of[order] = np.arange(m)
    out = {}
    for pair in targets:
        key = (min(pair), max(pair))
        if key not in edges:
            raise LookupError(f"edge {key} not in graph")
        position = edges.position(key)
        out[key] = 1.0 if m == 1 else (m - 1 - rank_of[position]) / (m - 1)
    return out


@dataclass
class EciReport:
    dataset: str
    kinds: dict[str, dict] = field(default_factory=dict)
    skipped_empty: int = 0

    def to_dict(self) -> dict:
        return {"dataset": self.dataset, "kinds": self.kinds,
                "skipped_empty": self.skipped_empty}


def dataset_eci(model, graphs, kinds, aggregate: str = "per_graph") -> EciReport:
    """Mean agreement between centrality importance and gradient
    contribution over a set of graphs.

    ``aggregate`` "per_graph" averages per-graph cosines; "concatenate"
    joins all edge vectors end-to-end and takes one cosine.
    """
    if aggregate not in ("per_graph", "concatenate"):
        raise ValueError(f"unknown aggregate mode {aggregate!r}")
    report = EciReport(dataset=getattr(graphs, "name", ""))
    usable = []
    contributions = []
    for g in graphs:
        if g.num_edges == 0:
            report.skipped_empty += 1
            continue
        usable.append(g)
        contributions.append(edge_contribution(model, g))
    if report.skipped_empty:
        log.warning("skipped %d edgeless graph(s)", report.skipped_empty)

    for kind in kinds:
        importances = [edge_importance(g, kind) for g in usable]
        if aggregate == "per_graph":
            values = [eci(imp, con)
                      for imp, con in zip(importances, contributions)]
            mean = float(np.mean(values)) if values else 0.0
            report.kinds[kind] = {"mean": mean, "per_graph": values}
        else:
            imp_all = EdgeScoreVector(
                kind=kind,
                values=np.concatenate([v.values for v in importances]),
                graph_id=-1)
            con_all = EdgeScoreVector(
                kind="grad",
                values=np.concatenate([v.values for v in contributions]),
                graph_id=-1)
            report.kinds[kind] = {"mean": eci(imp_all, con_all),
                                  "per_graph": []}
    return report
