"""Explanation extraction and evaluation metrics.

An explanation is the top-scoring subset of undirected edges for one output
class.  Three dataset-level metrics are provided: fidelity (probability
drop when the explanation edges are removed), discriminability (distance
between class-mean explanation embeddings) and stability (dataset coverage
of the most frequent canonical explanations).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np

from .attribution import AttributionResult, attribute
from .forward import run_forward
from .graphs import Dataset, Graph
from .models import ModelSpec


@dataclass(frozen=True)
class Explanation:
    """A ranked edge subset extracted for one class of one graph."""

    graph_index: int
    edges: tuple[tuple[int, int], ...]   # score-descending, ties by index
    scores: tuple[float, ...]
    sparsity: float                      # 1 - |S| / |E|
    predicted_class: int
    canonical_key: str                   # grouping key for stability


def _canonical_key(graph: Graph, edges) -> str:
    """Hash of the explanation subgraph labeled with quantized features.

    Uses 3 rounds of Weisfeiler-Leman refinement; only nodes touched by the
    explanation participate, so the key is independent of the host graph's
    size.
    """
    if not edges:
        return "empty"
    g = nx.Graph()
    for u, v in edges:
        g.add_edge(u, v)
    for node in g.nodes:
        label = ",".join(f"{v:.6f}" for v in graph.features[node])
        g.nodes[node]["label"] = label
    return nx.weisfeiler_lehman_graph_hash(g, node_attr="label", iterations=3)


def extract_explanation(
    attr: AttributionResult,
    graph: Graph,
    sparsity_target: float,
    class_index: int,
    graph_index: int = 0,
) -> Explanation:
    """Select the top ceil((1 - sparsity_target) * |E|) edges for a class."""
    if not 0.0 <= sparsity_target < 1.0:
        raise ValueError(f"sparsity_target must be in [0, 1), got {sparsity_target}")
    num_edges = len(attr.edges)
    if num_edges == 0:
        raise ValueError("cannot extract an explanation from a graph with no edges")
    keep = math.ceil((1.0 - sparsity_target) * num_edges)
    scores = attr.edge_scores[:, class_index]
    order = sorted(range(num_edges), key=lambda i: (-scores[i], attr.edges[i]))
    chosen = order[:keep]
    edges = tuple(attr.edges[i] for i in chosen)
    return Explanation(
        graph_index=graph_index,
        edges=edges,
        scores=tuple(float(scores[i]) for i in chosen),
        sparsity=1.0 - keep / num_edges,
        predicted_class=class_index,
        canonical_key=_canonical_key(graph, edges),
    )


def fidelity(model: ModelSpec, graph: Graph, expl: Explanation) -> float:
    """Drop in the predicted class's probability after removing the edges."""
    trace = run_forward(model, graph)
    if model.pooling != "mean":
        raise ValueError("fidelity is defined for graph-classification models")
    y = int(np.argmax(trace.probs))
    reduced = graph.with_edges_removed(expl.edges)
    after = run_forward(model, reduced)
    return float(trace.probs[y] - after.probs[y])


def embed_subgraph(
    model: ModelSpec,
    graph: Graph,
    expl: Explanation,
    stage: str = "conv",
    node: int | None = None,
) -> np.ndarray:
    """Representation of the graph with only the explanation edges kept.

    stage="conv" returns the pooled embedding after the last message-passing
    layer; stage="pre_final" returns the activations feeding the final
    classifier layer.  For node-classification models pass ``node`` and the
    corresponding row is returned.
    """
    sub = graph.with_only_edges(expl.edges)
    trace = run_forward(model, sub)
    if model.pooling == "mean":
        if stage == "conv":
            return trace.pooled.copy()
        if stage == "pre_final":
            taps = trace.clf[-1].post[0] if trace.clf else trace.pooled
            return taps.copy()
        raise ValueError(f"unknown stage {stage!r}")
    if node is None:
        raise ValueError("node-classification embeddings need a node index")
    if stage == "conv":
        return trace.conv[-1][-1].post[node].copy()
    if stage == "pre_final":
        taps = trace.clf[-1].post if trace.clf else trace.conv[-1][-1].post
        return taps[node].copy()
    raise ValueError(f"unknown stage {stage!r}")


def discriminability(
    embeddings: np.ndarray,
    true_labels,
    predicted_labels,
    c1: int,
    c2: int,
) -> float:
    """L2 distance between the mean embeddings of two classes.

    Only correctly predicted samples participate; an empty class after
    filtering is an error naming that class.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    true_labels = np.asarray(true_labels)
    predicted_labels = np.asarray(predicted_labels)
    correct = true_labels == predicted_labels
    means = []
    for c in (c1, c2):
        mask = correct & (true_labels == c)
        if not mask.any():
            raise ValueError(f"no correctly predicted samples for class {c}")
        means.append(emb[mask].mean(axis=0))
    return float(np.linalg.norm(means[0] - means[1]))


def stability(explanations, k: int) -> float:
    """Fraction of samples covered by the k most frequent explanations.

    Explanations group by their canonical key; groups are ranked by size
    with deterministic tie-breaking on the key itself.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not explanations:
        raise ValueError("stability needs at least one explanation")
    groups: dict[str, int] = {}
    for e in explanations:
        groups[e.canonical_key] = groups.get(e.canonical_key, 0) + 1
    sizes = sorted(groups.items(), key=lambda kv: (-kv[1], kv[0]))
    covered = sum(size for _, size in sizes[:k])
    return covered / len(explanations)


@dataclass
class MetricsReport:
    """Aggregates plus the per-sample records they were computed from."""

    metric: str
    summary: dict
    records: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "metric": self.metric,
            "config": self.config,
            "summary": self.summary,
            "records": self.records,
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), sort_keys=True, indent=1))

    def write_csv(self, path) -> None:
        if not self.records:
            Path(path).write_text("")
            return
        fields = list(self.records[0].keys())
        with Path(path).open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for rec in self.records:
                writer.writerow(rec)


def _predicted_class(model: ModelSpec, graph: Graph) -> int:
    return int(np.argmax(run_forward(model, graph).probs))


def fidelity_curve(
    model: ModelSpec,
    dataset: Dataset,
    sparsities,
    *,
    features_as_variables: bool = False,
    calibrate: bool = True,
) -> MetricsReport:
    """Mean and std of fidelity at each sparsity level over the dataset."""
    if not dataset.graphs:
        raise ValueError("dataset is empty")
    records = []
    for idx, graph in enumerate(dataset.graphs):
        attr = attribute(
            model, graph,
            features_as_variables=features_as_variables, calibrate=calibrate,
        )
        pred = _predicted_class(model, graph)
        for s in sparsities:
            expl = extract_explanation(attr, graph, s, pred, graph_index=idx)
            records.append(
                {
                    "graph": idx,
                    "sparsity": s,
                    "fidelity": fidelity(model, graph, expl),
                    "predicted_class": pred,
                    "edges_selected": len(expl.edges),
                }
            )
    summary = {}
    for s in sparsities:
        vals = np.array([r["fidelity"] for r in records if r["sparsity"] == s])
        summary[str(s)] = {
            "mean": float(vals.mean()),
            "std": float(vals.std()),
            "n": int(vals.size),
        }
    return MetricsReport(metric="fidelity", summary=summary, records=records)


def discriminability_report(
    model: ModelSpec,
    dataset: Dataset,
    sparsity: float,
    class_pairs=None,
    *,
    stage: str = "conv",
    features_as_variables: bool = False,
    calibrate: bool = True,
) -> MetricsReport:
    """Explanation embeddings per sample plus class-pair mean distances."""
    records = []
    embeddings = []
    true_labels = []
    predicted = []
    for idx, graph in enumerate(dataset.graphs):
        if graph.graph_label is None:
            raise ValueError(f"graph {idx} has no label; discriminability needs labels")
        attr = attribute(
            model, graph,
            features_as_variables=features_as_variables, calibrate=calibrate,
        )
        pred = _predicted_class(model, graph)
        expl = extract_explanation(attr, graph, sparsity, pred, graph_index=idx)
        emb = embed_subgraph(model, graph, expl, stage=stage)
        embeddings.append(emb)
        true_labels.append(graph.graph_label)
        predicted.append(pred)
        rec = {
            "graph": idx,
            "sparsity": sparsity,
            "true_class": graph.graph_label,
            "predicted_class": pred,
        }
        rec.update({f"e{i}": float(v) for i, v in enumerate(emb)})
        records.append(rec)
    embeddings = np.array(embeddings)
    if class_pairs is None:
        class_pairs = [
            (a, b)
            for a in range(dataset.num_classes)
            for b in range(a + 1, dataset.num_classes)
        ]
    summary = {}
    for c1, c2 in class_pairs:
        summary[f"{c1}-{c2}"] = discriminability(embeddings, true_labels, predicted, c1, c2)
    return MetricsReport(metric="discriminability", summary=summary, records=records)


def stability_report(
    model: ModelSpec,
    dataset: Dataset,
    sparsity: float,
    k_max: int = 10,
    *,
    features_as_variables: bool = False,
    calibrate: bool = True,
) -> MetricsReport:
    """Coverage of the top-k canonical explanations for k = 1..k_max."""
    explanations = []
    records = []
    for idx, graph in enumerate(dataset.graphs):
        attr = attribute(
            model, graph,
            features_as_variables=features_as_variables, calibrate=calibrate,
        )
        pred = _predicted_class(model, graph)
        expl = extract_explanation(attr, graph, sparsity, pred, graph_index=idx)
        explanations.append(expl)
        records.append(
            {
                "graph": idx,
                "sparsity": sparsity,
                "predicted_class": pred,
                "canonical_key": expl.canonical_key,
                "edges_selected": len(expl.edges),
            }
        )
    groups = len({e.canonical_key for e in explanations})
    summary = {
        "num_groups": groups,
        "coverage": {str(k): stability(explanations, k) for k in range(1, k_max + 1)},
    }
    return MetricsReport(metric="stability", summary=summary, records=records)
