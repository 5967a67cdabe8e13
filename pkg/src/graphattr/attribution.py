"""Per-edge output attribution for a traced network.

Every term class is linear in the factor occupying any single slot, so one
forward sweep of partial products plus one reverse (adjoint) sweep yields,
for every entry of that slot's factor, the total value of all scalar
products routed through that entry.  Dividing by the term's variable-slot
count implements occurrence weighting: an entry occupying several slots
collects one share per slot.

Pattern-slot totals are then redistributed onto the inputs that can drive
the pattern: the nonzero features of the pattern's node and the adjacency
entries within the layer's hop radius.  Subtracting the same sweep taken on
the zero-input baseline calibrates the scores so that, per class, all
scores sum to the output difference between the graph and the baseline.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .expansion import (
    ADJ,
    PATTERN,
    POOL,
    SCALE,
    WEIGHT,
    TermClass,
    apply_op,
    check_trace,
    count_occurrences,
    enumerate_terms,
    evaluate_term,
    origin_matrix,
    resolve_weight,
)
from .forward import ForwardTrace, run_forward, run_zero_baseline
from .graphs import Graph
from .models import ModelSpec


@dataclass(frozen=True)
class SlotContribution:
    """Per-entry contributions of one variable slot of one term class.

    ``entries`` sums (over all entries) to the term's evaluated value at the
    swept output position.
    """

    slot: tuple       # ("origin",) for the feature slot, else ("op", index)
    kind: str         # "adjacency" | "pattern" | "feature"
    ref: tuple | None
    entries: np.ndarray


@dataclass
class AttributionResult:
    """Edge-level scores for every output class, plus bookkeeping."""

    edges: list[tuple[int, int]]
    edge_scores: np.ndarray          # (num_edges, num_classes)
    diagonal_scores: np.ndarray      # (N, num_classes), self-loop entries
    feature_scores: np.ndarray       # (N, d, num_classes)
    features_as_variables: bool
    calibrated: bool
    target_row: int | None
    output_delta: np.ndarray         # f(G) - f(0,0) per class
    completeness_residual: np.ndarray
    diagnostics: dict

    def scores_for_class(self, class_index: int) -> np.ndarray:
        return self.edge_scores[:, class_index]

    def to_json_dict(self) -> dict:
        return {
            "edges": [
                {"u": u, "v": v, "score_per_class": self.edge_scores[i].tolist()}
                for i, (u, v) in enumerate(self.edges)
            ],
            "diagonal": self.diagonal_scores.tolist(),
            "features": self.feature_scores.tolist(),
            "residual": self.completeness_residual.tolist(),
            "output_delta": self.output_delta.tolist(),
            "mode": {
                "features_as_variables": self.features_as_variables,
                "calibrated": self.calibrated,
                "target_row": self.target_row,
            },
        }


def term_slots(term: TermClass, features_as_variables: bool = False) -> list[tuple]:
    """Identifiers of the term's variable slots, in sweep order."""
    slots = []
    if term.origin[0] == "x" and features_as_variables:
        slots.append(("origin",))
    for i, op in enumerate(term.ops):
        if op.kind in (ADJ, PATTERN):
            slots.append(("op", i))
    return slots


def _term_partials(term, model, trace):
    mats = [origin_matrix(term, model, trace)]
    for op in term.ops:
        mats.append(apply_op(op, mats[-1], model, trace))
    return mats


def _adjoint_sweep(term, model, trace, mats, class_index, row_index):
    """Adjoint pass; returns {slot id: SlotContribution} for every slot."""
    out = mats[-1]
    grad = np.zeros_like(out)
    grad[row_index, class_index] = 1.0
    contribs = {}
    for i in range(len(term.ops) - 1, -1, -1):
        op = term.ops[i]
        m_in = mats[i]
        if op.kind == ADJ:
            entries = trace.agg_matrix * (grad @ m_in.T)
            contribs[("op", i)] = SlotContribution(("op", i), "adjacency", None, entries)
            grad = trace.agg_matrix.T @ grad
        elif op.kind == WEIGHT:
            grad = grad @ resolve_weight(model, op.ref).T
        elif op.kind == PATTERN:
            p = trace.pattern(op.ref)
            entries = p * m_in * grad
            contribs[("op", i)] = SlotContribution(("op", i), "pattern", op.ref, entries)
            grad = p * grad
        elif op.kind == POOL:
            n = m_in.shape[0]
            grad = np.repeat(grad, n, axis=0) / n
        elif op.kind == SCALE:
            grad = op.value * grad
    if term.origin[0] == "x":
        contribs[("origin",)] = SlotContribution(
            ("origin",), "feature", None, trace.features * grad
        )
    return contribs


def slot_sweep(
    term: TermClass,
    model: ModelSpec,
    trace: ForwardTrace,
    slot: tuple,
    class_index: int,
    row: int | None = None,
) -> SlotContribution:
    """Per-entry contributions of one slot at one output position."""
    check_trace(model, trace)
    valid = set(term_slots(term, features_as_variables=True))
    if slot not in valid:
        raise ValueError(f"slot {slot!r} is not a variable slot of this term")
    row_index = 0 if model.pooling == "mean" else row
    if row_index is None:
        raise ValueError("node-classification sweeps need a target row")
    mats = _term_partials(term, model, trace)
    return _adjoint_sweep(term, model, trace, mats, class_index, row_index)[slot]


def _hop_distances(adjacency: np.ndarray) -> np.ndarray:
    """BFS hop counts between all node pairs, treating edges as symmetric."""
    n = adjacency.shape[0]
    sym = (adjacency + adjacency.T) > 0
    neighbors = [np.flatnonzero(sym[i]) for i in range(n)]
    dist = np.full((n, n), n + 1, dtype=np.int64)
    for start in range(n):
        dist[start, start] = 0
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in neighbors[u]:
                if dist[start, v] > dist[start, u] + 1:
                    dist[start, v] = dist[start, u] + 1
                    queue.append(v)
    return dist


def hop_neighborhood(graph: Graph, node: int, r: int) -> set[tuple[int, int]]:
    """Directed adjacency entries lying on some path of length <= r from node.

    An entry (i, j) qualifies when one of its endpoints is strictly closer
    than r to the node, so the edge can be reached and traversed within r
    steps.  Self-loops are never produced (the stored diagonal is zero).
    """
    if r < 1:
        raise ValueError("hop radius must be at least 1")
    dist = _hop_distances(graph.adjacency)[node]
    rows, cols = np.nonzero(graph.adjacency)
    keep = (dist[rows] <= r - 1) | (dist[cols] <= r - 1)
    return {(int(i), int(j)) for i, j in zip(rows[keep], cols[keep])}


def _pattern_radius(ref, num_conv_layers: int) -> int:
    return ref[1] + 1 if ref[0] == "conv" else num_conv_layers


def _accumulate_sweeps(model, trace, terms, features_as_variables, row_index, num_classes,
                       skip_adjacency_terms=False):
    """Occurrence-weighted accumulation of all slot sweeps.

    Returns (adjacency, feature, pattern-dict, term-values) accumulators with
    a trailing class axis.  With ``skip_adjacency_terms`` every term carrying
    an adjacency factor or the feature origin is skipped; on the zero-input
    baseline those terms vanish identically.
    """
    n = trace.num_nodes
    d = trace.features.shape[1]
    acc_adj = np.zeros((n, n, num_classes))
    acc_feat = np.zeros((n, d, num_classes))
    acc_pat = {}
    term_values = np.zeros((len(terms), num_classes))
    for t_idx, term in enumerate(terms):
        value = evaluate_term(term, model, trace)
        term_values[t_idx] = value if model.pooling == "mean" else value[row_index]
        if skip_adjacency_terms and (term.adjacency_ops or term.origin[0] == "x"):
            continue
        denom = count_occurrences(term, features_as_variables).denominator
        if denom == 0:
            continue
        mats = _term_partials(term, model, trace)
        for c in range(num_classes):
            for contrib in _adjoint_sweep(term, model, trace, mats, c, row_index).values():
                if contrib.kind == "feature" and not features_as_variables:
                    # Features are constants in this mode: not a variable slot.
                    continue
                share = contrib.entries / denom
                if contrib.kind == "adjacency":
                    acc_adj[:, :, c] += share
                elif contrib.kind == "feature":
                    acc_feat[:, :, c] += share
                else:
                    key = contrib.ref
                    if key not in acc_pat:
                        acc_pat[key] = np.zeros(share.shape + (num_classes,))
                    acc_pat[key][..., c] += share
    return acc_adj, acc_feat, acc_pat, term_values


def _redistribute(model, graph, net_pat, final_adj, final_feat, final_diag_extra):
    """Spread pattern totals onto supporting features and adjacency entries."""
    n = graph.num_nodes
    x = graph.features
    num_layers = model.num_conv_layers
    dist = _hop_distances(graph.adjacency)
    rows, cols = np.nonzero(graph.adjacency)
    nz_cols = [np.flatnonzero(x[a]) for a in range(n)]
    x_rows, x_cols = np.nonzero(x)

    for ref, mat in net_pat.items():
        radius = _pattern_radius(ref, num_layers)
        if ref[0] == "clf" and model.pooling == "mean":
            # Pooled classifier patterns see the whole graph.
            total = mat.sum(axis=(0, 1))
            size = rows.size + x_rows.size
            if size == 0:
                final_diag_extra += total[None, :] / n
                continue
            share = total / size
            final_adj[rows, cols] += share
            final_feat[x_rows, x_cols] += share
            continue
        row_totals = mat.sum(axis=1)  # (n, num_classes)
        for a in range(n):
            total = row_totals[a]
            if not total.any():
                continue
            keep = (dist[a, rows] <= radius - 1) | (dist[a, cols] <= radius - 1)
            size = int(keep.sum()) + nz_cols[a].size
            if size == 0:
                # Nothing reachable drives this pattern (isolated node with a
                # zero feature row); keep the share on the node itself so the
                # completeness sum stays exact.
                final_diag_extra[a] += total
                continue
            share = total / size
            final_adj[rows[keep], cols[keep]] += share
            if nz_cols[a].size:
                final_feat[a, nz_cols[a]] += share
    return final_adj, final_feat, final_diag_extra


def attribute(
    model: ModelSpec,
    graph: Graph,
    *,
    features_as_variables: bool = False,
    calibrate: bool = True,
    target_row: int | None = None,
) -> AttributionResult:
    """Attribute every output class to the graph's edges.

    With ``features_as_variables`` the feature matrix counts as a variable
    slot in each term it appears in; the default treats features as
    constants so their influence flows onto edges and patterns.  With
    ``calibrate`` the zero-input baseline's pattern contributions are
    subtracted before redistribution, making the scores sum to
    ``f(G) - f(0, 0)`` per class.
    """
    if model.pooling == "none":
        if target_row is None:
            raise ValueError("node-classification attribution needs target_row")
        if not 0 <= target_row < graph.num_nodes:
            raise ValueError(f"target_row {target_row} out of range")
        row_index = target_row
    else:
        if target_row is not None:
            raise ValueError("target_row is only meaningful when pooling is 'none'")
        row_index = 0

    trace = run_forward(model, graph)
    terms = enumerate_terms(model)
    n, d = graph.num_nodes, graph.num_features
    num_classes = model.num_classes

    acc_adj, acc_feat, acc_pat, term_values = _accumulate_sweeps(
        model, trace, terms, features_as_variables, row_index, num_classes
    )

    base_trace = run_zero_baseline(model, n, d)
    base_pat = {}
    if calibrate:
        _, _, base_pat, _ = _accumulate_sweeps(
            model, base_trace, terms, features_as_variables, row_index, num_classes,
            skip_adjacency_terms=True,
        )

    net_pat = {
        ref: mat - base_pat.get(ref, 0.0) for ref, mat in acc_pat.items()
    }

    final_adj = acc_adj.copy()
    final_feat = acc_feat.copy()
    diag_extra = np.zeros((n, num_classes))
    _redistribute(model, graph, net_pat, final_adj, final_feat, diag_extra)

    diagonal_scores = final_adj[np.arange(n), np.arange(n)] + diag_extra
    edges = graph.directed_entries() if graph.directed else graph.undirected_edges()
    if edges:
        if graph.directed:
            edge_scores = np.stack([final_adj[u, v] for u, v in edges])
        else:
            edge_scores = np.stack([final_adj[u, v] + final_adj[v, u] for u, v in edges])
    else:
        edge_scores = np.zeros((0, num_classes))

    base_logits = base_trace.logits if model.pooling == "mean" else base_trace.logits[row_index]
    full_logits = trace.logits if model.pooling == "mean" else trace.logits[row_index]
    output_delta = full_logits - base_logits
    total = edge_scores.sum(axis=0) + diagonal_scores.sum(axis=0) + final_feat.sum(axis=(0, 1))
    residual = np.abs(total - output_delta)

    diagnostics = {
        "term_values": term_values,
        "term_signatures": [t.signature() for t in terms],
        "adjacency_raw": acc_adj,
        "feature_raw": acc_feat,
        "pattern_raw": acc_pat,
        "pattern_baseline": base_pat,
    }
    return AttributionResult(
        edges=edges,
        edge_scores=edge_scores,
        diagonal_scores=diagonal_scores,
        feature_scores=final_feat,
        features_as_variables=features_as_variables,
        calibrated=calibrate,
        target_row=target_row,
        output_delta=output_delta,
        completeness_residual=residual,
        diagnostics=diagnostics,
    )
