"""Evaluation-mode inference that records everything attribution needs.

A trace keeps, for every activated sublayer, the pre-activation values, the
post-activation values, and the activation pattern: the elementwise ratio
post/pre where pre is nonzero and 0 elsewhere.  For ReLU the pattern is an
exact 0/1 gate and ``pattern * pre == post`` holds bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import Graph
from .models import ModelSpec


@dataclass(frozen=True)
class ActRecord:
    """Pre/post activations and the pattern of one activated sublayer."""

    pre: np.ndarray
    post: np.ndarray
    pattern: np.ndarray


@dataclass(frozen=True)
class ForwardTrace:
    """Everything recorded during one forward pass.

    ``agg_matrix`` is the propagation operator consumed by the conv layers:
    the degree-normalized adjacency with self-loops for gcn, adjacency plus
    identity for gin, the raw adjacency for sage, and all zeros for the
    zero-input baseline.
    """

    arch: str
    agg_matrix: np.ndarray
    features: np.ndarray
    conv: tuple[tuple[ActRecord, ...], ...]  # per layer, per activated sublayer
    pooled: np.ndarray | None                # (hidden,) after mean pooling
    clf: tuple[ActRecord, ...]               # hidden classifier layers only
    logits: np.ndarray                       # (C,) pooled, (N, C) otherwise
    probs: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.agg_matrix.shape[0]

    def pattern(self, ref) -> np.ndarray:
        """Look up a pattern by reference ("conv", layer, sub) or ("clf", k)."""
        if ref[0] == "conv":
            return self.conv[ref[1]][ref[2]].pattern
        if ref[0] == "clf":
            return self.clf[ref[1]].pattern
        raise KeyError(f"unknown pattern reference {ref!r}")

    def to_json_dict(self) -> dict:
        """Debug dump of the recorded intermediates."""
        return {
            "arch": self.arch,
            "agg_matrix": self.agg_matrix.tolist(),
            "conv": [
                [
                    {"pre": r.pre.tolist(), "post": r.post.tolist(),
                     "pattern": r.pattern.tolist()}
                    for r in layer
                ]
                for layer in self.conv
            ],
            "pooled": None if self.pooled is None else self.pooled.tolist(),
            "clf": [
                {"pre": r.pre.tolist(), "post": r.post.tolist(), "pattern": r.pattern.tolist()}
                for r in self.clf
            ],
            "logits": self.logits.tolist(),
            "probs": self.probs.tolist(),
        }


def normalize_adjacency(graph: Graph) -> np.ndarray:
    """Degree-normalized adjacency with self-loops added.

    Every node has degree at least one after the self-loop, so the
    normalization never divides by zero.
    """
    a_hat = graph.adjacency + np.eye(graph.num_nodes)
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return inv_sqrt[:, None] * a_hat * inv_sqrt[None, :]


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _pattern_of(pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    out = np.zeros_like(pre)
    np.divide(post, pre, out=out, where=pre != 0)
    return out


def _activate(pre: np.ndarray, activation: str) -> ActRecord:
    post = np.maximum(pre, 0.0) if activation == "relu" else pre.copy()
    return ActRecord(pre=pre, post=post, pattern=_pattern_of(pre, post))


def aggregation_matrix(model: ModelSpec, graph: Graph) -> np.ndarray:
    """The propagation operator each conv layer multiplies by on the left."""
    if model.arch == "gcn":
        return normalize_adjacency(graph)
    if model.arch == "gin":
        return graph.adjacency + np.eye(graph.num_nodes)
    return graph.adjacency.copy()  # sage


def _run(model: ModelSpec, agg: np.ndarray, x: np.ndarray) -> ForwardTrace:
    h = x
    conv_records = []
    for layer in model.conv_layers:
        if layer.kind == "gcn":
            pre = agg @ h @ layer.dense.weight
            if layer.dense.bias is not None:
                pre = pre + layer.dense.bias
            rec = _activate(pre, layer.dense.activation)
            conv_records.append((rec,))
        elif layer.kind == "sage":
            pre = agg @ h @ layer.w_phi + h @ layer.w_psi
            if layer.bias is not None:
                pre = pre + layer.bias
            rec = _activate(pre, "relu")
            conv_records.append((rec,))
        else:  # gin
            mixed = agg @ h + layer.eps * h
            first, second = layer.mlp
            pre1 = mixed @ first.weight
            if first.bias is not None:
                pre1 = pre1 + first.bias
            rec1 = _activate(pre1, first.activation)
            pre2 = rec1.post @ second.weight
            if second.bias is not None:
                pre2 = pre2 + second.bias
            rec2 = _activate(pre2, second.activation)
            conv_records.append((rec1, rec2))
        h = conv_records[-1][-1].post

    if model.pooling == "mean":
        pooled = h.mean(axis=0)
        z = pooled[None, :]
    else:
        pooled = None
        z = h

    clf_records = []
    for layer in model.classifier[:-1]:
        pre = z @ layer.weight
        if layer.bias is not None:
            pre = pre + layer.bias
        rec = _activate(pre, layer.activation)
        clf_records.append(rec)
        z = rec.post
    last = model.classifier[-1]
    logits2d = z @ last.weight
    if last.bias is not None:
        logits2d = logits2d + last.bias

    logits = logits2d[0] if model.pooling == "mean" else logits2d
    return ForwardTrace(
        arch=model.arch,
        agg_matrix=agg,
        features=x,
        conv=tuple(conv_records),
        pooled=pooled,
        clf=tuple(clf_records),
        logits=logits,
        probs=softmax(logits),
    )


def run_forward(model: ModelSpec, graph: Graph) -> ForwardTrace:
    """Run the model on a graph and record all intermediates."""
    if graph.num_features != model.in_dim:
        raise ValueError(
            f"graph feature dim {graph.num_features} does not match model "
            f"input dim {model.in_dim}"
        )
    return _run(model, aggregation_matrix(model, graph), graph.features)


def run_zero_baseline(model: ModelSpec, num_nodes: int, num_features: int) -> ForwardTrace:
    """Trace of the network with all adjacency and feature inputs zeroed.

    Only bias chains survive, so the output and its patterns depend on the
    model and the node count alone, never on the graph being explained.
    """
    if num_features != model.in_dim:
        raise ValueError(
            f"requested feature dim {num_features} does not match model "
            f"input dim {model.in_dim}"
        )
    agg = np.zeros((num_nodes, num_nodes))
    x = np.zeros((num_nodes, num_features))
    return _run(model, agg, x)
