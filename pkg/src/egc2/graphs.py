"""Graph data model, canonical edge indexing, and TU-format ingestion.

A dataset directory in TU format holds, for a dataset called ``NAME``:

    NAME_A.txt                one global edge per line, "i, j", 1-based node ids
    NAME_graph_indicator.txt  graph id (1-based) of every node, one per line
    NAME_graph_labels.txt     class label of every graph, one per line
    NAME_node_labels.txt      optional integer node label per node

Edges may be listed once or twice per undirected pair; both spellings load
to the same symmetric adjacency. Self-loops are dropped. Graphs left with
no edges are excluded from the dataset (the line graph and the compression
stage are undefined on them).
"""

from __future__ import annotations

import json
import logging
import pickle
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

CACHE_FORMAT_VERSION = 1


class IngestionError(Exception):
    """A mandatory dataset file is missing or unusable."""


class FormatError(Exception):
    """A dataset file contains a malformed or out-of-range token."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Graph:
    """Undirected attributed graph with a dense adjacency matrix.

    ``adjacency`` is binary, symmetric, with a zero diagonal. ``features``
    holds one finite row per node. ``node_labels`` keeps the raw integer
    labels from the source file when the dataset had any, so a dataset can
    be written back out losslessly.
    """

    id: int
    adjacency: np.ndarray
    features: np.ndarray
    label: int
    node_labels: tuple[int, ...] | None = None

    def __post_init__(self):
        adj = _freeze(self.adjacency)
        feats = _freeze(self.features)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "features", feats)
        n = adj.shape[0]
        if adj.shape != (n, n):
            raise ValueError(f"adjacency must be square, got {adj.shape}")
        if feats.shape[0] != n:
            raise ValueError(
                f"features have {feats.shape[0]} rows for {n} nodes")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise ValueError("adjacency diagonal must be zero")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features must be finite")
        if self.node_labels is not None and len(self.node_labels) != n:
            raise ValueError("node_labels length must equal node count")

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_edges(self) -> int:
        return int(self.adjacency.sum()) // 2

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)


@dataclass(frozen=True)
class EdgeList:
    """Canonical (i < j) edge ordering shared by every per-edge vector."""

    edges: tuple[tuple[int, int], ...]
    index: dict[tuple[int, int], int] = field(compare=False)

    @classmethod
    def from_pairs(cls, pairs) -> "EdgeList":
        edges = tuple(sorted((min(i, j), max(i, j)) for i, j in pairs))
        return cls(edges=edges, index={e: k for k, e in enumerate(edges)})

    def __len__(self) -> int:
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)

    def __contains__(self, pair) -> bool:
        i, j = pair
        return (min(i, j), max(i, j)) in self.index

    def position(self, pair) -> int:
        i, j = pair
        return self.index[(min(i, j), max(i, j))]


@dataclass
class GraphDataset:
    name: str
    graphs: list[Graph]
    num_classes: int
    feature_dim: int
    num_skipped_empty: int = 0

    def __post_init__(self):
        seen = set()
        for g in self.graphs:
            if g.features.shape[1] != self.feature_dim:
                raise ValueError(
                    f"graph {g.id}: feature dim {g.features.shape[1]} != "
                    f"{self.feature_dim}")
            if not 0 <= g.label < self.num_classes:
                raise ValueError(
                    f"graph {g.id}: label {g.label} outside "
                    f"0..{self.num_classes - 1}")
            seen.add(g.label)
        if len(self.graphs) and len(seen) < self.num_classes:
            raise ValueError("every class needs at least one graph")

    def __len__(self) -> int:
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)

    def max_nodes(self) -> int:
        return max(g.n for g in self.graphs)

    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=int)


def canonical_edges(graph: Graph) -> EdgeList:
    """Sorted unique (i < j) pairs covering the upper adjacency triangle."""
    rows, cols = np.nonzero(np.triu(graph.adjacency, k=1))
    return EdgeList.from_pairs(zip(rows.tolist(), cols.tolist()))


def synthesize_degree_features(graph_or_adj, max_degree: int) -> np.ndarray:
    """One-hot degree features: row i is hot at min(degree(i), max_degree)."""
    adj = graph_or_adj.adjacency if isinstance(graph_or_adj, Graph) else graph_or_adj
    deg = np.asarray(adj).sum(axis=1).astype(int)
    out = np.zeros((len(deg), max_degree + 1))
    out[np.arange(len(deg)), np.minimum(deg, max_degree)] = 1.0
    return out


def line_graph(graph: Graph) -> Graph:
    """Graph whose nodes are the canonical edges of ``graph``.

    Two line-graph nodes are adjacent iff their edges share exactly one
    endpoint. Node order equals the canonical edge order; features are a
    single constant column.
    """
    edges = canonical_edges(graph)
    m = len(edges)
    if m == 0:
        raise ValueError("line graph undefined")
    adj = np.zeros((m, m))
    incident: dict[int, list[int]] = {}
    for k, (i, j) in enumerate(edges):
        incident.setdefault(i, []).append(k)
        incident.setdefault(j, []).append(k)
    for members in incident.values():
        for a_pos, a in enumerate(members):
            for b in members[a_pos + 1:]:
                adj[a, b] = adj[b, a] = 1.0
    return Graph(id=graph.id, adjacency=adj, features=np.ones((m, 1)), label=0)


def _read_int_lines(path: Path, what: str) -> list[int]:
    values = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(int(line))
            except ValueError:
                raise FormatError(
                    f"{path.name}:{lineno}: non-integer {what} {line!r}") from None
    return values


def _read_edge_lines(path: Path) -> list[tuple[int, int, int]]:
    edges = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise FormatError(
                    f"{path.name}:{lineno}: expected 'i, j', got {line!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise FormatError(
                    f"{path.name}:{lineno}: non-integer node id in {line!r}"
                ) from None
            edges.append((a, b, lineno))
    return edges


def load_tu_dataset(directory, name: str) -> GraphDataset:
    """Load a TU-format dataset directory into a :class:`GraphDataset`.

    Node-label files become one-hot feature rows over the dataset-wide
    label universe; datasets without node labels get one-hot degree
    features capped at the dataset-wide maximum degree. Graph labels are
    remapped to contiguous 0-based classes.
    """
    directory = Path(directory)
    a_path = directory / f"{name}_A.txt"
    ind_path = directory / f"{name}_graph_indicator.txt"
    lab_path = directory / f"{name}_graph_labels.txt"
    nl_path = directory / f"{name}_node_labels.txt"
    for path in (a_path, ind_path, lab_path):
        if not path.exists():
            raise IngestionError(f"missing mandatory file {path.name}")

    indicator = _read_int_lines(ind_path, "graph indicator")
    raw_labels = _read_int_lines(lab_path, "graph label")
    total_nodes = len(indicator)

    graph_ids = sorted(set(indicator))
    if len(raw_labels) != len(graph_ids):
        raise IngestionError(
            f"{lab_path.name}: {len(raw_labels)} labels for "
            f"{len(graph_ids)} graphs")
    gid_pos = {gid: k for k, gid in enumerate(graph_ids)}

    # global node id -> (graph position, local node id)
    local: list[tuple[int, int]] = []
    counts = [0] * len(graph_ids)
    for gid in indicator:
        pos = gid_pos[gid]
        local.append((pos, counts[pos]))
        counts[pos] += 1

    adjacencies = [np.zeros((c, c)) for c in counts]
    dropped_self_loops = 0
    for a, b, lineno in _read_edge_lines(a_path):
        if not (1 <= a <= total_nodes and 1 <= b <= total_nodes):
            raise FormatError(
                f"{a_path.name}:{lineno}: node id out of range ({a}, {b})")
        ga, ia = local[a - 1]
        gb, ib = local[b - 1]
        if ga != gb:
            raise FormatError(
                f"{a_path.name}:{lineno}: edge crosses graphs {ga} and {gb}")
        if ia == ib:
            dropped_self_loops += 1
            continue
        adjacencies[ga][ia, ib] = adjacencies[ga][ib, ia] = 1.0
    if dropped_self_loops:
        log.warning("%s: dropped %d self-loop(s)", name, dropped_self_loops)

    node_labels_per_graph: list[list[int]] | None = None
    if nl_path.exists():
        nl = _read_int_lines(nl_path, "node label")
        if len(nl) != total_nodes:
            raise IngestionError(
                f"{nl_path.name}: {len(nl)} node labels for "
                f"{total_nodes} nodes")
        node_labels_per_graph = [[0] * c for c in counts]
        for value, (pos, loc) in zip(nl, local):
            node_labels_per_graph[pos][loc] = value

    label_map = {v: k for k, v in enumerate(sorted(set(raw_labels)))}

    if node_labels_per_graph is not None:
        universe = sorted({v for per in node_labels_per_graph for v in per})
        col = {v: k for k, v in enumerate(universe)}
        feature_dim = len(universe)
    else:
        max_degree = max(
            (int(adj.sum(axis=1).max()) if adj.size else 0)
            for adj in adjacencies)
        feature_dim = max_degree + 1

    graphs: list[Graph] = []
    skipped = 0
    for pos, adj in enumerate(adjacencies):
        if adj.sum() == 0:
            skipped += 1
            continue
        if node_labels_per_graph is not None:
            feats = np.zeros((counts[pos], feature_dim))
            for row, value in enumerate(node_labels_per_graph[pos]):
                feats[row, col[value]] = 1.0
            labels = tuple(node_labels_per_graph[pos])
        else:
            feats = synthesize_degree_features(adj, feature_dim - 1)
            labels = None
        graphs.append(Graph(
            id=len(graphs), adjacency=adj, features=feats,
            label=label_map[raw_labels[pos]], node_labels=labels))
    if skipped:
        log.warning("%s: skipped %d graph(s) with no edges", name, skipped)

    return GraphDataset(
        name=name, graphs=graphs, num_classes=len(label_map),
        feature_dim=feature_dim, num_skipped_empty=skipped)


def write_tu_dataset(dataset: GraphDataset, directory) -> None:
    """Write a dataset back out in TU format (edges in both directions)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    name = dataset.name
    with_node_labels = all(g.node_labels is not None for g in dataset.graphs)

    a_lines, ind_lines, nl_lines = [], [], []
    offset = 0
    for k, g in enumerate(dataset.graphs, start=1):
        for i, j in canonical_edges(g):
            a_lines.append(f"{offset + i + 1}, {offset + j + 1}")
            a_lines.append(f"{offset + j + 1}, {offset + i + 1}")
        ind_lines.extend([str(k)] * g.n)
        if with_node_labels:
            nl_lines.extend(str(v) for v in g.node_labels)
        offset += g.n

    (directory / f"{name}_A.txt").write_text("\n".join(a_lines) + "\n")
    (directory / f"{name}_graph_indicator.txt").write_text(
        "\n".join(ind_lines) + "\n")
    (directory / f"{name}_graph_labels.txt").write_text(
        "\n".join(str(g.label) for g in dataset.graphs) + "\n")
    if with_node_labels:
        (directory / f"{name}_node_labels.txt").write_text(
            "\n".join(nl_lines) + "\n")


def _dataset_to_record(dataset: GraphDataset) -> dict:
    return {
        "format_version": CACHE_FORMAT_VERSION,
        "name": dataset.name,
        "num_classes": dataset.num_classes,
        "feature_dim": dataset.feature_dim,
        "num_skipped_empty": dataset.num_skipped_empty,
        "graphs": [
            {
                "id": g.id,
                "adjacency": g.adjacency.tolist(),
                "features": g.features.tolist(),
                "label": g.label,
                "node_labels": list(g.node_labels) if g.node_labels else None,
            }
            for g in dataset.graphs
        ],
    }


def _dataset_from_record(record: dict) -> GraphDataset:
    version = record.get("format_version")
    if version != CACHE_FORMAT_VERSION:
        raise IngestionError(f"unsupported cache format version {version!r}")
    graphs = [
        Graph(
            id=g["id"],
            adjacency=np.array(g["adjacency"], dtype=np.float64),
            features=np.array(g["features"], dtype=np.float64),
            label=g["label"],
            node_labels=tuple(g["node_labels"]) if g["node_labels"] else None,
        )
        for g in record["graphs"]
    ]
    return GraphDataset(
        name=record["name"], graphs=graphs,
        num_classes=record["num_classes"],
        feature_dim=record["feature_dim"],
        num_skipped_empty=record.get("num_skipped_empty", 0))


def save_dataset_cache(dataset: GraphDataset, path, fmt: str = "json") -> None:
    """Serialize a dataset to ``path`` as ``json`` or ``bin`` (pickle)."""
    path = Path(path)
    record = _dataset_to_record(dataset)
    if fmt == "json":
        path.write_text(json.dumps(record))
    elif fmt == "bin":
        with path.open("wb") as fh:
            pickle.dump(record, fh, protocol=pickle.HIGHEST_PROTOCOL)
    else:
        raise ValueError(f"unknown cache format {fmt!r}")


def load_dataset_cache(path) -> GraphDataset:
    path = Path(path)
    head = path.open("rb").read(1)
    if head == b"{":
        record = json.loads(path.read_text())
    else:
        with path.open("rb") as fh:
            record = pickle.load(fh)
    return _dataset_from_record(record)
