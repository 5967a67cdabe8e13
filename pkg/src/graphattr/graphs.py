"""Graph and dataset containers, JSON/CSV ingestion, and a synthetic
two-motif dataset generator for desk-scale experiments.

Adjacency matrices are dense 0/1 float arrays.  Undirected edges are stored
as two mirrored entries; self-loops are never stored (architectures that
need them add their own diagonal when building the propagation operator).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import networkx as nx
import numpy as np

from .errors import GraphFormatError

# Feature layout used by the synthetic generator: constant all-ones vectors.
SYNTHETIC_FEATURE_DIM = 10

# Local edge lists of the two planted 5-node motifs.  The "house" is a
# 4-cycle with an apex joined to one wall; the alternative is a plain 5-cycle.
HOUSE_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4))
CYCLE_EDGES = ((0, 1), (1, 2), (2, 3), (3, 4), (4, 0))


@dataclass(frozen=True)
class Graph:
    """A single graph instance: dense adjacency plus node features."""

    adjacency: np.ndarray
    features: np.ndarray
    directed: bool = False
    graph_label: int | None = None
    node_labels: np.ndarray | None = None

    def __post_init__(self):
        adj = np.ascontiguousarray(np.asarray(self.adjacency, dtype=np.float64))
        x = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise GraphFormatError(f"adjacency must be square, got shape {adj.shape}")
        n = adj.shape[0]
        if n < 1:
            raise GraphFormatError("graph must have at least one node")
        if x.ndim != 2 or x.shape[0] != n:
            raise GraphFormatError(
                f"features must be (num_nodes, d), got {x.shape} for {n} nodes"
            )
        bad = (adj != 0.0) & (adj != 1.0)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise GraphFormatError(
                f"adjacency entries must be 0 or 1, found {adj[i, j]!r} at ({i}, {j})"
            )
        if np.diagonal(adj).any():
            i = int(np.flatnonzero(np.diagonal(adj))[0])
            raise GraphFormatError(f"self-loop stored at node {i}; diagonal must be 0")
        if not self.directed and not np.array_equal(adj, adj.T):
            i, j = np.argwhere(adj != adj.T)[0]
            raise GraphFormatError(
                f"undirected graph has asymmetric adjacency at ({i}, {j})"
            )
        if not np.isfinite(x).all():
            raise GraphFormatError("features contain non-finite values")
        labels = self.node_labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (n,):
                raise GraphFormatError(
                    f"node_labels must have length {n}, got shape {labels.shape}"
                )
        adj.setflags(write=False)
        x.setflags(write=False)
        if labels is not None:
            labels.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "node_labels", labels)

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def undirected_edges(self) -> list[tuple[int, int]]:
        """Edges as (u, v) with u < v; requires an undirected graph."""
        if self.directed:
            raise ValueError("undirected_edges() is defined only for undirected graphs")
        rows, cols = np.nonzero(np.triu(self.adjacency, k=1))
        return [(int(u), int(v)) for u, v in zip(rows, cols)]

    def directed_entries(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self.adjacency)
        return [(int(u), int(v)) for u, v in zip(rows, cols)]

    @property
    def num_edges(self) -> int:
        """Undirected edge count (directed entry count for directed graphs)."""
        nnz = int(np.count_nonzero(self.adjacency))
        return nnz if self.directed else nnz // 2

    def with_edges_removed(self, edges) -> "Graph":
        """Copy with each listed edge zeroed (both orientations if undirected)."""
        adj = self.adjacency.copy()
        for u, v in edges:
            adj[u, v] = 0.0
            if not self.directed:
                adj[v, u] = 0.0
        return Graph(adj, self.features, self.directed, self.graph_label, self.node_labels)

    def with_only_edges(self, edges) -> "Graph":
        """Copy keeping only the listed edges; the node set is unchanged."""
        adj = np.zeros_like(self.adjacency)
        for u, v in edges:
            adj[u, v] = 1.0
            if not self.directed:
                adj[v, u] = 1.0
        return Graph(adj, self.features, self.directed, self.graph_label, self.node_labels)

    def to_json_dict(self) -> dict:
        edges = self.undirected_edges() if not self.directed else self.directed_entries()
        out = {
            "num_nodes": self.num_nodes,
            "directed": self.directed,
            "edges": [[u, v] for u, v in edges],
            "x": self.features.tolist(),
        }
        if self.graph_label is not None:
            out["label"] = int(self.graph_label)
        if self.node_labels is not None:
            out["node_labels"] = [int(v) for v in self.node_labels]
        return out


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of graphs sharing a feature dimension."""

    graphs: tuple[Graph, ...]
    task: str = "graph"  # "graph" or "node"
    num_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if self.task not in ("graph", "node"):
            raise GraphFormatError(f"task must be 'graph' or 'node', got {self.task!r}")
        if self.num_classes < 1:
            raise GraphFormatError("num_classes must be positive")
        if not self.graphs:
            raise GraphFormatError("dataset must contain at least one graph")
        d = self.graphs[0].num_features
        for i, g in enumerate(self.graphs):
            if g.num_features != d:
                raise GraphFormatError(
                    f"graph {i} has feature dim {g.num_features}, expected {d}"
                )
            if g.graph_label is not None and not 0 <= g.graph_label < self.num_classes:
                raise GraphFormatError(
                    f"graph {i} label {g.graph_label} out of range for "
                    f"{self.num_classes} classes"
                )
            if g.node_labels is not None and g.node_labels.size:
                top = int(g.node_labels.max())
                if top >= self.num_classes or int(g.node_labels.min()) < 0:
                    raise GraphFormatError(
                        f"graph {i} node labels out of range for {self.num_classes} classes"
                    )

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].num_features

    def to_json_dict(self) -> dict:
        return {
            "task": self.task,
            "num_classes": self.num_classes,
            "graphs": [g.to_json_dict() for g in self.graphs],
        }


def _edges_to_adjacency(num_nodes, edges, directed, *, source=""):
    adj = np.zeros((num_nodes, num_nodes), dtype=np.float64)
    for idx, pair in enumerate(edges):
        if len(pair) != 2:
            raise GraphFormatError(f"{source}edge {idx} is not a pair: {pair!r}")
        u, v = int(pair[0]), int(pair[1])
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise GraphFormatError(
                f"{source}edge {idx} = ({u}, {v}) out of range for {num_nodes} nodes"
            )
        if u == v:
            raise GraphFormatError(f"{source}edge {idx} is a self-loop at node {u}")
        adj[u, v] = 1.0
        if not directed:
            adj[v, u] = 1.0
    return adj


def graph_from_json_dict(obj: dict, *, source="") -> Graph:
    for key in ("num_nodes", "edges", "x"):
        if key not in obj:
            raise GraphFormatError(f"{source}missing required field {key!r}")
    n = int(obj["num_nodes"])
    directed = bool(obj.get("directed", False))
    adj = _edges_to_adjacency(n, obj["edges"], directed, source=source)
    x = np.asarray(obj["x"], dtype=np.float64)
    label = obj.get("label")
    node_labels = obj.get("node_labels")
    return Graph(
        adjacency=adj,
        features=x,
        directed=directed,
        graph_label=None if label is None else int(label),
        node_labels=None if node_labels is None else np.asarray(node_labels, dtype=np.int64),
    )


def _infer_num_classes(graphs) -> int:
    labels = [g.graph_label for g in graphs if g.graph_label is not None]
    for g in graphs:
        if g.node_labels is not None and g.node_labels.size:
            labels.append(int(g.node_labels.max()))
    return max(2, max(labels) + 1) if labels else 2


def load_graphs(path, fmt: str = "json") -> Dataset:
    """Load a Dataset from a file.

    fmt="json" accepts either a full dataset document
    ``{"task": ..., "num_classes": ..., "graphs": [...]}`` or a single graph
    document, which is wrapped into a one-graph dataset.

    fmt="edge_csv" reads an edge list with header ``src,dst``; node count,
    features and labels come from a sibling JSON file at the same path with
    the suffix replaced by ``.json`` (a graph document without "edges").
    """
    path = Path(path)
    if fmt == "json":
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"{path}: {exc}") from exc
        if "graphs" in obj:
            for key in ("task", "num_classes"):
                if key not in obj:
                    raise GraphFormatError(f"{path}: missing required field {key!r}")
            graphs = [
                graph_from_json_dict(g, source=f"{path}: graph {i}: ")
                for i, g in enumerate(obj["graphs"])
            ]
            return Dataset(tuple(graphs), task=obj["task"], num_classes=int(obj["num_classes"]))
        g = graph_from_json_dict(obj, source=f"{path}: ")
        return Dataset((g,), task="graph", num_classes=_infer_num_classes([g]))
    if fmt == "edge_csv":
        sibling = path.with_suffix(".json")
        if not sibling.exists():
            raise GraphFormatError(f"{path}: sibling feature file {sibling} not found")
        try:
            meta = json.loads(sibling.read_text())
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"{sibling}: {exc}") from exc
        edges = []
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["src", "dst"]:
                raise GraphFormatError(f"{path}: line 1: expected header 'src,dst'")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) < 2:
                    raise GraphFormatError(f"{path}: line {lineno}: expected two columns")
                try:
                    edges.append((int(row[0]), int(row[1])))
                except ValueError as exc:
                    raise GraphFormatError(f"{path}: line {lineno}: {exc}") from exc
        meta = dict(meta)
        meta["edges"] = edges
        g = graph_from_json_dict(meta, source=f"{path}: ")
        return Dataset((g,), task="graph", num_classes=_infer_num_classes([g]))
    raise GraphFormatError(f"unknown format {fmt!r}; expected 'json' or 'edge_csv'")


def save_dataset(dataset: Dataset, path) -> None:
    Path(path).write_text(json.dumps(dataset.to_json_dict(), sort_keys=True, indent=1))


def save_graph(graph: Graph, path) -> None:
    Path(path).write_text(json.dumps(graph.to_json_dict(), sort_keys=True, indent=1))


def _attach_motif(base: nx.Graph, motif_edges, rng: np.random.Generator) -> nx.Graph:
    """Append the 5-node motif and bridge it to the base with one random edge."""
    g = base.copy()
    offset = g.number_of_nodes()
    for u, v in motif_edges:
        g.add_edge(offset + u, offset + v)
    anchor = int(rng.integers(offset, offset + 5))
    target = int(rng.integers(0, offset))
    g.add_edge(anchor, target)
    return g


def generate_ba2motifs(count: int, base_size: int = 20, seed: int = 0) -> Dataset:
    """Generate a two-class motif dataset for graph classification.

    Each graph is a Barabasi-Albert base (attachment parameter 1) of
    ``base_size`` nodes with a 5-node motif bridged to it by one random edge:
    label 1 gets the house motif, label 0 the 5-cycle.  Node features are
    constant all-ones vectors of width 10.  Class balance is ~50/50 and the
    whole dataset is a deterministic function of the seed.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if base_size < 5:
        raise ValueError(f"base_size must be at least 5, got {base_size}")
    rng = np.random.default_rng(seed)
    graphs = []
    for _ in range(count):
        label = int(rng.integers(0, 2))
        base_seed = int(rng.integers(0, 2**32 - 1))
        base = nx.barabasi_albert_graph(base_size, 1, seed=base_seed)
        motif = HOUSE_EDGES if label == 1 else CYCLE_EDGES
        g = _attach_motif(base, motif, rng)
        n = g.number_of_nodes()
        adj = np.zeros((n, n), dtype=np.float64)
        for u, v in g.edges():
            adj[u, v] = 1.0
            adj[v, u] = 1.0
        x = np.ones((n, SYNTHETIC_FEATURE_DIM), dtype=np.float64)
        graphs.append(Graph(adjacency=adj, features=x, graph_label=label))
    return Dataset(tuple(graphs), task="graph", num_classes=2)
