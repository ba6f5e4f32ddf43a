"""Graph-classification robustness laboratory.

Pipeline: TU ingestion -> optional centrality-guided compression ->
hierarchical-pooling classifier with a feature-graph read-out ->
gradient edge attribution and the edge contribution-importance index ->
edge-flip attack harness and defense grids.
"""

from egc2.graphs import (
    EdgeList,
    Graph,
    GraphDataset,
    canonical_edges,
    line_graph,
    load_tu_dataset,
    synthesize_degree_features,
    write_tu_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "EdgeList",
    "Graph",
    "GraphDataset",
    "canonical_edges",
    "line_graph",
    "load_tu_dataset",
    "synthesize_degree_features",
    "write_tu_dataset",
    "__version__",
]
