"""Exhaustive expansion of a tiny network into individual scalar products.

This module re-executes the forward pass symbolically: every matrix cell
holds the explicit list of scalar products flowing into it, each product
carrying its constant and the multiset of variable identifiers it touches
(adjacency entries, pattern entries and, in the default mode, feature
entries).  It exists to validate the polynomial attribution path on
instances small enough to enumerate, and is deliberately written without
reference to the term-class machinery.

Variable identifiers are tuples: ("adj", i, j) for propagation-operator
entries, ("x", i, j) for features, ("p", ref, i, j) for pattern entries
where ``ref`` matches the trace's pattern references.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable

import numpy as np

from .errors import SizeGuardError
from .forward import ForwardTrace, run_forward
from .graphs import Graph
from .models import ModelSpec

# Hard limits; beyond these the product count explodes.
MAX_NODES = 6
MAX_FEATURES = 3
MAX_CONV_LAYERS = 2
MAX_WIDTH = 4


@dataclass(frozen=True)
class ScalarProduct:
    """One scalar product: a constant times recorded variable values."""

    constant: float
    variables: tuple[Hashable, ...]
    value: float

    @property
    def unique_count(self) -> int:
        return len(set(self.variables))


def _cell(*entries):
    return list(entries)


def _sym_features(x: np.ndarray, features_as_variables: bool):
    n, d = x.shape
    if features_as_variables:
        return [
            [_cell((1.0, x[i, j], (("x", i, j),))) for j in range(d)]
            for i in range(n)
        ]
    return [[_cell((x[i, j], x[i, j], ())) for j in range(d)] for i in range(n)]


def _sym_leftmul(sym, operator: np.ndarray):
    n = operator.shape[0]
    width = len(sym[0])
    out = [[[] for _ in range(width)] for _ in range(n)]
    for i in range(n):
        for j in range(width):
            bucket = out[i][j]
            for k in range(n):
                var = ("adj", i, k)
                a_val = operator[i, k]
                for const, val, variables in sym[k][j]:
                    bucket.append((const, val * a_val, variables + (var,)))
    return out


def _sym_scale(sym, factor: float):
    return [
        [[(const * factor, val * factor, variables) for const, val, variables in cell]
         for cell in row]
        for row in sym
    ]


def _sym_add(a, b):
    return [[ca + cb for ca, cb in zip(ra, rb)] for ra, rb in zip(a, b)]


def _sym_rightmul(sym, weight: np.ndarray):
    rows = len(sym)
    in_dim, out_dim = weight.shape
    out = [[[] for _ in range(out_dim)] for _ in range(rows)]
    for i in range(rows):
        for j in range(out_dim):
            bucket = out[i][j]
            for k in range(in_dim):
                w = weight[k, j]
                if w == 0.0:
                    continue
                for const, val, variables in sym[i][k]:
                    bucket.append((const * w, val * w, variables))
    return out


def _sym_add_bias(sym, bias):
    if bias is None:
        return sym
    return [
        [cell + [(bias[j], bias[j], ())] for j, cell in enumerate(row)]
        for row in sym
    ]


def _sym_pattern(sym, pattern: np.ndarray, ref):
    out = []
    for i, row in enumerate(sym):
        new_row = []
        for j, cell in enumerate(row):
            var = ("p", ref, i, j)
            p = pattern[i, j]
            new_row.append([(const, val * p, variables + (var,)) for const, val, variables in cell])
        out.append(new_row)
    return out


def _sym_pool(sym):
    n = len(sym)
    width = len(sym[0])
    out = [[[] for _ in range(width)]]
    for j in range(width):
        bucket = out[0][j]
        for i in range(n):
            for const, val, variables in sym[i][j]:
                bucket.append((const / n, val / n, variables))
    return out


def expand_all(
    model: ModelSpec,
    graph: Graph,
    *,
    features_as_variables: bool = True,
    trace: ForwardTrace | None = None,
) -> list[list[ScalarProduct]]:
    """Expand the output into scalar products, one list per output class.

    For node-classification models the expansion is returned for every node
    row stacked into a single list per class, with products from row ``m``
    recoverable through the trace; desk use is the pooled graph case.
    Raises SizeGuardError when the instance exceeds the enumeration guard.
    """
    n, d = graph.num_nodes, graph.num_features
    widths = [layer.out_dim for layer in model.conv_layers]
    for layer in model.conv_layers:
        if layer.kind == "gin":
            widths.append(layer.mlp[0].out_dim)
    widths += [layer.out_dim for layer in model.classifier[:-1]]
    max_width = max(widths)
    bounds = (
        (n, MAX_NODES, "nodes"),
        (d, MAX_FEATURES, "feature dim"),
        (model.num_conv_layers, MAX_CONV_LAYERS, "conv layers"),
        (max_width, MAX_WIDTH, "hidden width"),
    )
    for measured, limit, name in bounds:
        if measured > limit:
            raise SizeGuardError(
                f"exhaustive expansion refused: {name} = {measured} exceeds limit {limit}"
            )

    if trace is None:
        trace = run_forward(model, graph)
    sym = _sym_features(trace.features, features_as_variables)
    operator = trace.agg_matrix

    for l, layer in enumerate(model.conv_layers):
        if layer.kind == "gcn":
            sym = _sym_leftmul(sym, operator)
            sym = _sym_rightmul(sym, layer.dense.weight)
            sym = _sym_add_bias(sym, layer.dense.bias)
            sym = _sym_pattern(sym, trace.conv[l][0].pattern, ("conv", l, 0))
        elif layer.kind == "sage":
            neighbor = _sym_rightmul(_sym_leftmul(sym, operator), layer.w_phi)
            self_part = _sym_rightmul(sym, layer.w_psi)
            sym = _sym_add_bias(_sym_add(neighbor, self_part), layer.bias)
            sym = _sym_pattern(sym, trace.conv[l][0].pattern, ("conv", l, 0))
        else:  # gin
            mixed = _sym_add(_sym_leftmul(sym, operator), _sym_scale(sym, layer.eps))
            first, second = layer.mlp
            sym = _sym_add_bias(_sym_rightmul(mixed, first.weight), first.bias)
            sym = _sym_pattern(sym, trace.conv[l][0].pattern, ("conv", l, 0))
            sym = _sym_add_bias(_sym_rightmul(sym, second.weight), second.bias)
            sym = _sym_pattern(sym, trace.conv[l][1].pattern, ("conv", l, 1))

    if model.pooling == "mean":
        sym = _sym_pool(sym)

    for k, layer in enumerate(model.classifier[:-1]):
        sym = _sym_add_bias(_sym_rightmul(sym, layer.weight), layer.bias)
        sym = _sym_pattern(sym, trace.clf[k].pattern, ("clf", k))
    last = model.classifier[-1]
    sym = _sym_add_bias(_sym_rightmul(sym, last.weight), last.bias)

    per_class = []
    num_rows = len(sym)
    for c in range(model.num_classes):
        products = []
        for i in range(num_rows):
            products.extend(
                ScalarProduct(const, variables, val) for const, val, variables in sym[i][c]
            )
        per_class.append(products)
    return per_class


def oracle_attribute(products, mode: str, variable) -> float:
    """Attribution of one variable over a list of scalar products.

    mode="unique" splits each product equally over its unique variables;
    mode="occurrence" weighs by how often the variable occurs among the
    product's variable occurrences.  Both agree exactly on products whose
    occurrences are all distinct.
    """
    if mode not in ("unique", "occurrence"):
        raise ValueError(f"unknown mode {mode!r}; expected 'unique' or 'occurrence'")
    total = 0.0
    for z in products:
        hits = z.variables.count(variable)
        if hits == 0:
            continue
        if mode == "unique":
            total += z.value / z.unique_count
        else:
            total += z.value * hits / len(z.variables)
    return total


def oracle_attribute_all(products, mode: str) -> dict:
    """Single-pass attribution of every variable appearing in the products."""
    if mode not in ("unique", "occurrence"):
        raise ValueError(f"unknown mode {mode!r}; expected 'unique' or 'occurrence'")
    acc: dict = {}
    for z in products:
        if not z.variables:
            continue
        if mode == "unique":
            unique = set(z.variables)
            share = z.value / len(unique)
            for v in unique:
                acc[v] = acc.get(v, 0.0) + share
        else:
            share = z.value / len(z.variables)
            for v in z.variables:
                acc[v] = acc.get(v, 0.0) + share
    return acc


def reconstruction_gap(model: ModelSpec, graph: Graph, per_class=None) -> float:
    """Max absolute gap between summed products and the traced logits."""
    trace = run_forward(model, graph)
    if per_class is None:
        per_class = expand_all(model, graph, trace=trace)
    sums = np.array([sum(z.value for z in products) for products in per_class])
    # Node-task products are flattened over rows, so compare against row sums.
    logits = trace.logits if model.pooling == "mean" else trace.logits.sum(axis=0)
    return float(np.abs(sums - logits).max())
