"""Convert a torch checkpoint into the canonical model JSON.

The exporter recognizes one parameter-name template per architecture (the
reference modules in ``torch_models``), maps every parameter explicitly,
folds batch-norm blocks away, and refuses to emit anything whose logits
disagree with the target engine beyond a small bound on a set of
validation graphs.  Nothing is ever reshaped silently: linear weights are
transposed from torch's (out, in) layout and the manifest records that per
parameter.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from graphattr import load_graphs, run_forward
from graphattr.models import ModelSpec, model_from_json_dict, model_to_json_dict

from .torch_models import build_stack

DEVIATION_LIMIT = 1e-4
MIN_VALIDATION_GRAPHS = 3


class ExportError(RuntimeError):
    """Raised when a checkpoint cannot be exported faithfully."""


@dataclass
class ExportManifest:
    source: str
    arch: str
    layer_map: list = field(default_factory=list)
    per_graph_deviation: list = field(default_factory=list)
    max_abs_logit_deviation: float = 0.0
    num_validation_graphs: int = 0

    def to_json_dict(self) -> dict:
        return {
            "source": self.source,
            "arch": self.arch,
            "layer_map": self.layer_map,
            "per_graph_deviation": self.per_graph_deviation,
            "max_abs_logit_deviation": self.max_abs_logit_deviation,
            "num_validation_graphs": self.num_validation_graphs,
        }


_PATTERNS = {
    "gcn": [
        (re.compile(r"^convs\.(\d+)\.(weight|bias)$"), "conv"),
        (re.compile(r"^bns\.(\d+)\.(weight|bias|running_mean|running_var|num_batches_tracked)$"), "bn"),
        (re.compile(r"^classifier\.(\d+)\.(weight|bias)$"), "clf"),
    ],
    "sage": [
        (re.compile(r"^convs\.(\d+)\.lin_(neighbor|self)\.(weight|bias)$"), "conv"),
        (re.compile(r"^classifier\.(\d+)\.(weight|bias)$"), "clf"),
    ],
    "gin": [
        (re.compile(r"^convs\.(\d+)\.eps$"), "eps"),
        (re.compile(r"^convs\.(\d+)\.mlp\.([02])\.(weight|bias)$"), "conv"),
        (re.compile(r"^classifier\.(\d+)\.(weight|bias)$"), "clf"),
    ],
}


def _match_parameters(arch: str, state: dict) -> dict:
    """Group parameters by template slot; reject anything unrecognized."""
    if arch not in _PATTERNS:
        raise ExportError(f"unknown architecture {arch!r}; expected gcn, sage or gin")
    grouped: dict = {"conv": {}, "bn": {}, "clf": {}, "eps": {}}
    unmatched = []
    for name, tensor in state.items():
        hit = None
        for pattern, kind in _PATTERNS[arch]:
            m = pattern.match(name)
            if m:
                hit = (kind, m.groups())
                break
        if hit is None:
            unmatched.append(name)
            continue
        kind, groups = hit
        idx = int(groups[0])
        grouped[kind].setdefault(idx, {})[groups[1:]] = (name, tensor)
    if unmatched:
        raise ExportError(
            "checkpoint does not match the template; unmapped parameters: "
            + ", ".join(sorted(unmatched))
        )
    return grouped


def _expect_contiguous(indices, what):
    if sorted(indices) != list(range(len(indices))):
        raise ExportError(f"{what} indices are not contiguous from 0: {sorted(indices)}")


def _linear_to_canonical(name, weight, bias, expected_in, layer_map):
    w = weight.detach().cpu().numpy().astype(np.float64)
    if w.ndim != 2:
        raise ExportError(f"parameter {name} must be 2-D, got shape {tuple(w.shape)}")
    if expected_in is not None and w.shape[1] != expected_in:
        raise ExportError(
            f"parameter {name} has shape {tuple(w.shape)} but the chain expects "
            f"in_dim {expected_in}; transposed weight?"
        )
    layer_map.append({
        "source": name,
        "target_shape": [w.shape[1], w.shape[0]],
        "transposed": True,
    })
    entry = {"W": w.T.tolist()}
    if bias is not None:
        b_name, b = bias
        layer_map.append({
            "source": b_name,
            "target_shape": [int(b.shape[0])],
            "transposed": False,
        })
        entry["B"] = b.detach().cpu().numpy().astype(np.float64).tolist()
    return entry, w.shape[0]


def _assemble_json(arch: str, grouped: dict, layer_map: list) -> dict:
    conv_entries = []
    dim = None
    _expect_contiguous(list(grouped["conv"]), "conv layer")
    for i in sorted(grouped["conv"]):
        params = grouped["conv"][i]
        if arch == "gcn":
            name, w = params[("weight",)]
            entry, dim = _linear_to_canonical(name, w, params.get(("bias",)), dim, layer_map)
            conv_entries.append(entry)
        elif arch == "sage":
            n_name, n_w = params[("neighbor", "weight")]
            s_name, s_w = params[("self", "weight")]
            phi, out_dim = _linear_to_canonical(n_name, n_w, None, dim, layer_map)
            psi, _ = _linear_to_canonical(s_name, s_w, None, dim, layer_map)
            entry = {"W_phi": phi["W"], "W_psi": psi["W"]}
            if ("neighbor", "bias") in params:
                b_name, b = params[("neighbor", "bias")]
                layer_map.append({"source": b_name,
                                  "target_shape": [int(b.shape[0])],
                                  "transposed": False})
                entry["B"] = b.detach().cpu().numpy().astype(np.float64).tolist()
            conv_entries.append(entry)
            dim = out_dim
        else:  # gin
            if i not in grouped["eps"]:
                raise ExportError(f"gin layer {i} is missing its eps parameter")
            eps_name, eps = grouped["eps"][i][()]
            layer_map.append({"source": eps_name, "target_shape": [], "transposed": False})
            first_name, first_w = params[("0", "weight")]
            second_name, second_w = params[("2", "weight")]
            first, mid = _linear_to_canonical(first_name, first_w, params.get(("0", "bias")), dim, layer_map)
            second, out_dim = _linear_to_canonical(second_name, second_w, params.get(("2", "bias")), mid, layer_map)
            conv_entries.append({"eps": float(eps.detach()), "mlp": [first, second]})
            dim = out_dim

    clf_entries = []
    _expect_contiguous(list(grouped["clf"]), "classifier layer")
    for k in sorted(grouped["clf"]):
        params = grouped["clf"][k]
        name, w = params[("weight",)]
        entry, dim = _linear_to_canonical(name, w, params.get(("bias",)), dim, layer_map)
        clf_entries.append(entry)
    num_classes = dim

    doc = {
        "arch": arch,
        "conv_layers": conv_entries,
        "pooling": "mean",
        "classifier": clf_entries,
        "num_classes": int(num_classes),
    }

    if grouped["bn"]:
        if arch != "gcn":
            raise ExportError("batch-norm blocks are only templated for gcn checkpoints")
        blocks = [None] * len(conv_entries)
        for i, params in grouped["bn"].items():
            if i >= len(conv_entries):
                raise ExportError(f"bn block {i} has no matching conv layer")
            for key in (("weight",), ("bias",), ("running_mean",), ("running_var",)):
                if key not in params:
                    raise ExportError(f"bn block {i} is missing {key[0]}")
                layer_map.append({
                    "source": params[key][0],
                    "target_shape": list(params[key][1].shape),
                    "transposed": False,
                })
            blocks[i] = {
                "mu": params[("running_mean",)][1].detach().numpy().astype(np.float64).tolist(),
                "var": params[("running_var",)][1].detach().numpy().astype(np.float64).tolist(),
                "eps": 1e-5,
                "W": params[("weight",)][1].detach().numpy().astype(np.float64).tolist(),
                "B": params[("bias",)][1].detach().numpy().astype(np.float64).tolist(),
            }
        doc["bn"] = blocks
    return doc


def _reference_forward(arch, state, dims, clf_dims, with_bn, graph):
    model = build_stack(arch, dims, clf_dims, **({"with_bn": True} if with_bn else {}))
    model.load_state_dict(state)
    model.eval()
    adj = torch.tensor(graph.adjacency, dtype=torch.float64)
    x = torch.tensor(graph.features, dtype=torch.float64)
    with torch.no_grad():
        return model(adj, x).numpy()


def _stack_dims(spec: ModelSpec):
    dims = [spec.in_dim] + [layer.out_dim for layer in spec.conv_layers]
    clf_dims = [spec.classifier[0].in_dim] + [layer.out_dim for layer in spec.classifier]
    return dims, clf_dims


def validate_export(arch, state, spec: ModelSpec, graphs, with_bn=False):
    """Max-abs logit deviation per graph between torch and the target engine."""
    dims, clf_dims = _stack_dims(spec)
    deviations = []
    for graph in graphs:
        reference = _reference_forward(arch, state, dims, clf_dims, with_bn, graph)
        engine = run_forward(spec, graph).logits
        deviations.append(float(np.abs(reference - engine).max()))
    return deviations


def export(
    checkpoint_path,
    arch: str | None = None,
    validation_graphs_path=None,
    out_path=None,
    manifest_path=None,
    deviation_limit: float = DEVIATION_LIMIT,
):
    """Export a checkpoint to canonical model JSON with logit validation.

    Returns (ModelSpec, ExportManifest).  Nothing is written when the
    checkpoint does not match the template or when any validation graph's
    logits deviate beyond ``deviation_limit``.
    """
    checkpoint_path = Path(checkpoint_path)
    obj = torch.load(checkpoint_path, map_location="cpu", weights_only=False)
    if isinstance(obj, dict) and "state_dict" in obj:
        state = obj["state_dict"]
        arch = arch or obj.get("arch")
    else:
        state = obj
    if arch is None:
        raise ExportError("architecture not recorded in the checkpoint; pass arch=")
    state = {k: v for k, v in state.items()}

    grouped = _match_parameters(arch, state)
    layer_map: list = []
    doc = _assemble_json(arch, grouped, layer_map)
    had_bn = "bn" in doc
    spec = model_from_json_dict(doc)  # folds any bn blocks

    if validation_graphs_path is None:
        raise ExportError("validation graphs are required")
    graphs = load_graphs(validation_graphs_path).graphs
    if len(graphs) < MIN_VALIDATION_GRAPHS:
        raise ExportError(
            f"need at least {MIN_VALIDATION_GRAPHS} validation graphs, got {len(graphs)}"
        )
    deviations = validate_export(arch, state, spec, graphs, with_bn=had_bn)
    max_dev = max(deviations)
    if max_dev > deviation_limit:
        raise ExportError(
            f"export refused: max logit deviation {max_dev:.3e} exceeds "
            f"{deviation_limit:.0e}"
        )

    manifest = ExportManifest(
        source=str(checkpoint_path),
        arch=arch,
        layer_map=layer_map,
        per_graph_deviation=deviations,
        max_abs_logit_deviation=max_dev,
        num_validation_graphs=len(graphs),
    )
    if out_path is not None:
        out_path = Path(out_path)
        out_path.write_text(json.dumps(model_to_json_dict(spec), sort_keys=True, indent=1))
        target = Path(manifest_path) if manifest_path else out_path.with_suffix(".manifest.json")
        target.write_text(json.dumps(manifest.to_json_dict(), sort_keys=True, indent=1))
    return spec, manifest
