"""Exact expansion of the network output into matrix-valued term classes.

Because every layer is linear up to an elementwise gate, the output splits
into a finite sum of chains, each starting at the feature matrix or at one
bias vector and then alternating propagation, weight multiplication and
pattern gating.  Each chain (a *term class*) covers exponentially many
scalar products but is evaluated with a handful of matrix operations, and
the sum of all term classes reconstructs the logits exactly.

Chains are stored as operation lists.  Per conv layer the architecture
contributes a fixed branch set: gcn has the single normalized-adjacency
branch, gin chooses between adjacency and the scalar self weight, sage
between the neighbor and self weight matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .forward import ForwardTrace
from .models import ModelSpec

# Op kinds: "adj" (left-multiply by the propagation operator), "weight"
# (right-multiply), "pattern" (elementwise gate), "pool" (mean over nodes),
# "scale" (multiply by a constant such as a gin self weight).
ADJ = "adj"
WEIGHT = "weight"
PATTERN = "pattern"
POOL = "pool"
SCALE = "scale"


@dataclass(frozen=True)
class Op:
    kind: str
    ref: tuple | None = None  # ("conv", l, s) / ("sage", l, "phi"|"psi") / ("clf", k)
    value: float = 1.0        # scale ops only
    label: str = ""


@dataclass(frozen=True)
class TermClass:
    """One summand family of the expansion.

    ``origin`` is ("x",) or ("bias", ref); ``branches`` records the choice
    taken at each conv layer after the origin; ``constant_factor`` is the
    product of the scalar constants picked up along the way.
    """

    origin: tuple
    ops: tuple[Op, ...]
    branches: tuple[str, ...]
    constant_factor: float = 1.0

    @property
    def adjacency_ops(self) -> tuple[int, ...]:
        return tuple(i for i, op in enumerate(self.ops) if op.kind == ADJ)

    @property
    def pattern_ops(self) -> tuple[int, ...]:
        return tuple(i for i, op in enumerate(self.ops) if op.kind == PATTERN)

    @property
    def pattern_slots(self) -> tuple[tuple, ...]:
        return tuple(self.ops[i].ref for i in self.pattern_ops)

    def signature(self) -> str:
        """Human-auditable rendering, propagation factors leftmost."""
        left = [op.label for op in reversed(self.ops) if op.kind in (ADJ, SCALE)]
        origin = "X" if self.origin[0] == "x" else _bias_label(self.origin[1])
        weights = [op.label for op in self.ops if op.kind == WEIGHT]
        patterns = [_pattern_label(ref) for ref in self.pattern_slots]
        head = "·".join(left + [origin] + weights)
        return f"{head} | patterns @ {','.join(patterns) if patterns else '-'}"


@dataclass(frozen=True)
class OccurrenceCounts:
    """Variable-slot counts of one term class.

    Every slot holds one variable occurrence, so ``denominator`` is the
    total occurrence count shared by every scalar product of the class.
    """

    adjacency: int
    pattern: int
    feature: int
    denominator: int


def _bias_label(ref) -> str:
    if ref[0] == "clf":
        return f"Bc{ref[1] + 1}"
    _, l, s = ref
    return f"B{l + 1}.{s + 1}" if s > 0 else f"B{l + 1}"


def _pattern_label(ref) -> str:
    if ref[0] == "clf":
        return f"c{ref[1] + 1}"
    _, l, s = ref
    return f"{l + 1}.{s + 1}" if s > 0 else f"{l + 1}"


def _weight_label(ref) -> str:
    if ref[0] == "clf":
        return f"Wc{ref[1] + 1}"
    if ref[0] == "sage":
        _, l, branch = ref
        return f"W{l + 1}{'p' if branch == 'phi' else 's'}"
    _, l, s = ref
    return f"W{l + 1}.{s + 1}"


def _adj_label(model: ModelSpec) -> str:
    return {"gcn": "V", "gin": "A", "sage": "A"}[model.arch]


def _gcn_weight_label(l: int) -> str:
    return f"W{l + 1}"


def _conv_branch_ops(model: ModelSpec, l: int, branch: str) -> list[Op]:
    """Ops that carry a hidden state through conv layer ``l`` via ``branch``."""
    layer = model.conv_layers[l]
    if layer.kind == "gcn":
        return [
            Op(ADJ, label=_adj_label(model)),
            Op(WEIGHT, ref=("conv", l, 0), label=_gcn_weight_label(l)),
            Op(PATTERN, ref=("conv", l, 0)),
        ]
    if layer.kind == "sage":
        if branch == "adjacency":
            return [
                Op(ADJ, label="A"),
                Op(WEIGHT, ref=("sage", l, "phi"), label=_weight_label(("sage", l, "phi"))),
                Op(PATTERN, ref=("conv", l, 0)),
            ]
        return [
            Op(WEIGHT, ref=("sage", l, "psi"), label=_weight_label(("sage", l, "psi"))),
            Op(PATTERN, ref=("conv", l, 0)),
        ]
    # gin
    head = (
        [Op(ADJ, label="A")]
        if branch == "adjacency"
        else [Op(SCALE, value=layer.eps, label=f"eps{l + 1}")]
    )
    return head + [
        Op(WEIGHT, ref=("conv", l, 0), label=_weight_label(("conv", l, 0))),
        Op(PATTERN, ref=("conv", l, 0)),
        Op(WEIGHT, ref=("conv", l, 1), label=_weight_label(("conv", l, 1))),
        Op(PATTERN, ref=("conv", l, 1)),
    ]


def _branch_set(model: ModelSpec, l: int) -> tuple[str, ...]:
    if model.conv_layers[l].kind == "gcn":
        return ("adjacency",)
    return ("adjacency", "self")


def _resume_ops(model: ModelSpec, ref) -> list[Op]:
    """Ops finishing the layer a bias enters at, starting right after it."""
    kind, l, s = ref
    layer = model.conv_layers[l]
    if layer.kind in ("gcn", "sage"):
        return [Op(PATTERN, ref=("conv", l, 0))]
    if s == 0:
        return [
            Op(PATTERN, ref=("conv", l, 0)),
            Op(WEIGHT, ref=("conv", l, 1), label=_weight_label(("conv", l, 1))),
            Op(PATTERN, ref=("conv", l, 1)),
        ]
    return [Op(PATTERN, ref=("conv", l, 1))]


def _classifier_ops(model: ModelSpec, start: int = 0) -> list[Op]:
    ops = []
    m = model.num_classifier_layers
    for k in range(start, m):
        ops.append(Op(WEIGHT, ref=("clf", k), label=f"Wc{k + 1}"))
        if k < m - 1:
            ops.append(Op(PATTERN, ref=("clf", k)))
    return ops


def _pool_ops(model: ModelSpec) -> list[Op]:
    return [Op(POOL)] if model.pooling == "mean" else []


def _tails(model: ModelSpec, start_layer: int):
    """All branch combinations over conv layers start_layer..L-1."""
    layer_range = range(start_layer, model.num_conv_layers)
    for combo in product(*(_branch_set(model, l) for l in layer_range)):
        ops = []
        for l, branch in zip(layer_range, combo):
            ops.extend(_conv_branch_ops(model, l, branch))
        yield combo, ops


def _conv_bias_refs(model: ModelSpec):
    for l, layer in enumerate(model.conv_layers):
        if layer.kind == "gcn":
            if layer.dense.bias is not None:
                yield ("conv", l, 0)
        elif layer.kind == "sage":
            if layer.bias is not None:
                yield ("conv", l, 0)
        else:
            for s, sub in enumerate(layer.mlp):
                if sub.bias is not None:
                    yield ("conv", l, s)


def enumerate_terms(model: ModelSpec) -> list[TermClass]:
    """All term classes of the model's expansion, in a fixed order.

    For the 3-conv-layer, 2-classifier-layer reference shapes this yields
    6 classes for gcn, 24 for gin and 17 for sage.
    """
    terms = []
    finish = _pool_ops(model) + _classifier_ops(model)

    for combo, tail in _tails(model, 0):
        terms.append(TermClass(origin=("x",), ops=tuple(tail + finish), branches=combo))

    for ref in _conv_bias_refs(model):
        resume = _resume_ops(model, ref)
        for combo, tail in _tails(model, ref[1] + 1):
            terms.append(
                TermClass(
                    origin=("bias", ref),
                    ops=tuple(resume + tail + finish),
                    branches=combo,
                )
            )

    for k, layer in enumerate(model.classifier):
        if layer.bias is None:
            continue
        ops = []
        if k < model.num_classifier_layers - 1:
            ops.append(Op(PATTERN, ref=("clf", k)))
        ops.extend(_classifier_ops(model, start=k + 1))
        terms.append(TermClass(origin=("bias", ("clf", k)), ops=tuple(ops), branches=()))

    out = []
    for t in terms:
        const = 1.0
        for op in t.ops:
            if op.kind == SCALE:
                const *= op.value
        out.append(TermClass(t.origin, t.ops, t.branches, const))
    return out


def resolve_weight(model: ModelSpec, ref) -> np.ndarray:
    if ref[0] == "clf":
        return model.classifier[ref[1]].weight
    if ref[0] == "sage":
        layer = model.conv_layers[ref[1]]
        return layer.w_phi if ref[2] == "phi" else layer.w_psi
    layer = model.conv_layers[ref[1]]
    if layer.kind == "gcn":
        return layer.dense.weight
    return layer.mlp[ref[2]].weight


def resolve_bias(model: ModelSpec, ref) -> np.ndarray:
    if ref[0] == "clf":
        return model.classifier[ref[1]].bias
    layer = model.conv_layers[ref[1]]
    if layer.kind == "gcn":
        return layer.dense.bias
    if layer.kind == "sage":
        return layer.bias
    return layer.mlp[ref[2]].bias


def check_trace(model: ModelSpec, trace: ForwardTrace) -> None:
    if trace.arch != model.arch:
        raise ValueError(f"trace was recorded for {trace.arch!r}, model is {model.arch!r}")
    if len(trace.conv) != model.num_conv_layers:
        raise ValueError("trace and model disagree on the number of conv layers")
    if trace.features.shape[1] != model.in_dim:
        raise ValueError("trace feature dim does not match model input dim")
    if (trace.pooled is not None) != (model.pooling == "mean"):
        raise ValueError("trace and model disagree on pooling")


def origin_matrix(term: TermClass, model: ModelSpec, trace: ForwardTrace) -> np.ndarray:
    """The matrix the term's chain starts from."""
    n = trace.num_nodes
    if term.origin[0] == "x":
        return trace.features
    ref = term.origin[1]
    bias = resolve_bias(model, ref)
    if ref[0] == "clf" and model.pooling == "mean":
        return np.broadcast_to(bias, (1, bias.shape[0]))
    return np.broadcast_to(bias, (n, bias.shape[0]))


def apply_op(op: Op, mat: np.ndarray, model: ModelSpec, trace: ForwardTrace) -> np.ndarray:
    if op.kind == ADJ:
        return trace.agg_matrix @ mat
    if op.kind == WEIGHT:
        return mat @ resolve_weight(model, op.ref)
    if op.kind == PATTERN:
        return trace.pattern(op.ref) * mat
    if op.kind == POOL:
        return mat.mean(axis=0, keepdims=True)
    if op.kind == SCALE:
        return op.value * mat
    raise ValueError(f"unknown op kind {op.kind!r}")


def evaluate_term(term: TermClass, model: ModelSpec, trace: ForwardTrace) -> np.ndarray:
    """Evaluate one term class on a trace.

    Returns a (num_classes,) vector for pooled models and an (N, num_classes)
    matrix otherwise.  Summing over all term classes reconstructs the logits.
    """
    check_trace(model, trace)
    mat = origin_matrix(term, model, trace)
    for op in term.ops:
        mat = apply_op(op, mat, model, trace)
    return mat[0] if model.pooling == "mean" else mat


def count_occurrences(term: TermClass, features_as_variables: bool = False) -> OccurrenceCounts:
    """Slot counts feeding the occurrence-weighted attribution rule."""
    n_adj = len(term.adjacency_ops)
    n_pat = len(term.pattern_ops)
    n_feat = 1 if (term.origin[0] == "x" and features_as_variables) else 0
    return OccurrenceCounts(n_adj, n_pat, n_feat, n_adj + n_pat + n_feat)
