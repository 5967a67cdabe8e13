"""Architecture description of a pretrained message-passing network.

Three convolution kinds are supported, all using ReLU gating:

* ``gcn``   one dense map per layer, applied after degree-normalized
  propagation with self-loops,
* ``sage``  separate neighbor/self weight matrices combined by addition,
* ``gin``   a scalar self-loop weight ``eps`` feeding a 2-layer MLP.

A classifier of dense layers follows, the last one without activation.
Batch-norm blocks present in a model file are folded into the preceding
dense map at load time, so downstream code never sees them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ModelFormatError


@dataclass(frozen=True)
class DenseLayer:
    """One affine map ``h -> h @ weight + bias`` with optional ReLU."""

    weight: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray | None
    activation: str = "relu"

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.weight, dtype=np.float64))
        if w.ndim != 2:
            raise ModelFormatError(f"weight must be 2-D, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise ModelFormatError("weight contains non-finite values")
        b = self.bias
        if b is not None:
            b = np.ascontiguousarray(np.asarray(b, dtype=np.float64))
            if b.shape != (w.shape[1],):
                raise ModelFormatError(
                    f"bias shape {b.shape} does not match weight out_dim {w.shape[1]}"
                )
            if not np.isfinite(b).all():
                raise ModelFormatError("bias contains non-finite values")
            b.setflags(write=False)
        if self.activation not in ("relu", "none"):
            raise ModelFormatError(
                f"unsupported activation {self.activation!r}; only 'relu' and 'none' exist"
            )
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True)
class ConvLayer:
    """One message-passing layer; exactly the fields of its kind are set."""

    kind: str
    dense: DenseLayer | None = None                      # gcn
    w_phi: np.ndarray | None = None                      # sage, neighbor branch
    w_psi: np.ndarray | None = None                      # sage, self branch
    bias: np.ndarray | None = None                       # sage
    eps: float | None = None                             # gin
    mlp: tuple[DenseLayer, DenseLayer] | None = None     # gin

    def __post_init__(self):
        if self.kind == "gcn":
            if self.dense is None or any(
                f is not None for f in (self.w_phi, self.w_psi, self.bias, self.eps, self.mlp)
            ):
                raise ModelFormatError("gcn layer takes exactly one dense map")
            if self.dense.activation != "relu":
                raise ModelFormatError("gcn conv layers must use relu")
        elif self.kind == "sage":
            if self.w_phi is None or self.w_psi is None or self.dense is not None \
                    or self.eps is not None or self.mlp is not None:
                raise ModelFormatError("sage layer takes w_phi, w_psi and optional bias")
            w_phi = np.ascontiguousarray(np.asarray(self.w_phi, dtype=np.float64))
            w_psi = np.ascontiguousarray(np.asarray(self.w_psi, dtype=np.float64))
            if w_phi.shape != w_psi.shape:
                raise ModelFormatError(
                    f"sage weight shapes differ: {w_phi.shape} vs {w_psi.shape}"
                )
            if not (np.isfinite(w_phi).all() and np.isfinite(w_psi).all()):
                raise ModelFormatError("sage weights contain non-finite values")
            b = self.bias
            if b is not None:
                b = np.ascontiguousarray(np.asarray(b, dtype=np.float64))
                if b.shape != (w_phi.shape[1],):
                    raise ModelFormatError("sage bias shape does not match out_dim")
                b.setflags(write=False)
            w_phi.setflags(write=False)
            w_psi.setflags(write=False)
            object.__setattr__(self, "w_phi", w_phi)
            object.__setattr__(self, "w_psi", w_psi)
            object.__setattr__(self, "bias", b)
        elif self.kind == "gin":
            if self.eps is None or self.mlp is None or self.dense is not None \
                    or self.w_phi is not None or self.w_psi is not None or self.bias is not None:
                raise ModelFormatError("gin layer takes eps and a 2-layer mlp")
            if len(self.mlp) != 2:
                raise ModelFormatError("gin mlp must have exactly two dense layers")
            first, second = self.mlp
            if first.out_dim != second.in_dim:
                raise ModelFormatError(
                    f"gin mlp dims do not chain: sublayer 1 out {first.out_dim} "
                    f"vs sublayer 2 in {second.in_dim}"
                )
            if first.activation != "relu" or second.activation != "relu":
                raise ModelFormatError("gin mlp sublayers must use relu")
            object.__setattr__(self, "eps", float(self.eps))
            object.__setattr__(self, "mlp", tuple(self.mlp))
        else:
            raise ModelFormatError(f"unknown conv kind {self.kind!r}")

    @property
    def in_dim(self) -> int:
        if self.kind == "gcn":
            return self.dense.in_dim
        if self.kind == "sage":
            return self.w_phi.shape[0]
        return self.mlp[0].in_dim

    @property
    def out_dim(self) -> int:
        if self.kind == "gcn":
            return self.dense.out_dim
        if self.kind == "sage":
            return self.w_phi.shape[1]
        return self.mlp[1].out_dim


@dataclass(frozen=True)
class ModelSpec:
    """A full pretrained network: conv stack, optional pooling, classifier."""

    conv_layers: tuple[ConvLayer, ...]
    classifier: tuple[DenseLayer, ...]
    pooling: str = "mean"  # "mean" for graph tasks, "none" for node tasks
    num_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "conv_layers", tuple(self.conv_layers))
        object.__setattr__(self, "classifier", tuple(self.classifier))
        if not self.conv_layers:
            raise ModelFormatError("model needs at least one conv layer")
        if not self.classifier:
            raise ModelFormatError("model needs at least one classifier layer")
        if self.pooling not in ("mean", "none"):
            raise ModelFormatError(f"unknown pooling {self.pooling!r}")
        kinds = {layer.kind for layer in self.conv_layers}
        if len(kinds) != 1:
            raise ModelFormatError(f"conv layers mix kinds: {sorted(kinds)}")
        for i in range(len(self.conv_layers) - 1):
            a, b = self.conv_layers[i], self.conv_layers[i + 1]
            if a.out_dim != b.in_dim:
                raise ModelFormatError(
                    f"conv layer {i} out_dim {a.out_dim} does not match "
                    f"conv layer {i + 1} in_dim {b.in_dim}"
                )
        if self.conv_layers[-1].out_dim != self.classifier[0].in_dim:
            raise ModelFormatError(
                f"conv layer {len(self.conv_layers) - 1} out_dim "
                f"{self.conv_layers[-1].out_dim} does not match "
                f"classifier layer 0 in_dim {self.classifier[0].in_dim}"
            )
        for k in range(len(self.classifier) - 1):
            a, b = self.classifier[k], self.classifier[k + 1]
            if a.out_dim != b.in_dim:
                raise ModelFormatError(
                    f"classifier layer {k} out_dim {a.out_dim} does not match "
                    f"classifier layer {k + 1} in_dim {b.in_dim}"
                )
            if a.activation != "relu":
                raise ModelFormatError(f"classifier layer {k} must use relu")
        if self.classifier[-1].activation != "none":
            raise ModelFormatError("final classifier layer must have no activation")
        if self.classifier[-1].out_dim != self.num_classes:
            raise ModelFormatError(
                f"final classifier out_dim {self.classifier[-1].out_dim} "
                f"does not match num_classes {self.num_classes}"
            )

    @property
    def arch(self) -> str:
        return self.conv_layers[0].kind

    @property
    def in_dim(self) -> int:
        return self.conv_layers[0].in_dim

    @property
    def num_conv_layers(self) -> int:
        return len(self.conv_layers)

    @property
    def num_classifier_layers(self) -> int:
        return len(self.classifier)


def fold_batchnorm(mu, delta, epsvar, W, B):
    """Rewrite an evaluation-mode batch-norm as an equivalent affine map.

    The normalization ``y = (x - mu) / sqrt(delta + epsvar) * W + B`` equals
    ``y = x * W_bn + B_bn`` elementwise with the returned pair.
    """
    mu = np.asarray(mu, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    denom = delta + epsvar
    if np.any(denom <= 0):
        raise ModelFormatError("batch-norm variance term must be positive")
    scale = np.sqrt(denom)
    w_bn = W / scale
    b_bn = -mu * W / scale + B
    return w_bn, b_bn


def _fold_bn_into_dense(layer: DenseLayer, bn: dict) -> DenseLayer:
    w_bn, b_bn = fold_batchnorm(bn["mu"], bn["var"], float(bn["eps"]), bn["W"], bn["B"])
    new_w = layer.weight * w_bn[None, :]
    old_b = layer.bias if layer.bias is not None else np.zeros(layer.out_dim)
    new_b = old_b * w_bn + b_bn
    return DenseLayer(new_w, new_b, layer.activation)


def _dense_from_json(obj: dict, activation: str, *, where: str) -> DenseLayer:
    if "W" not in obj:
        raise ModelFormatError(f"{where}: missing field 'W'")
    return DenseLayer(
        weight=np.asarray(obj["W"], dtype=np.float64),
        bias=None if obj.get("B") is None else np.asarray(obj["B"], dtype=np.float64),
        activation=activation,
    )


def _conv_from_json(arch: str, obj: dict, *, where: str) -> ConvLayer:
    if arch == "gcn":
        return ConvLayer(kind="gcn", dense=_dense_from_json(obj, "relu", where=where))
    if arch == "sage":
        for key in ("W_phi", "W_psi"):
            if key not in obj:
                raise ModelFormatError(f"{where}: missing field {key!r}")
        return ConvLayer(
            kind="sage",
            w_phi=np.asarray(obj["W_phi"], dtype=np.float64),
            w_psi=np.asarray(obj["W_psi"], dtype=np.float64),
            bias=None if obj.get("B") is None else np.asarray(obj["B"], dtype=np.float64),
        )
    if arch == "gin":
        if "eps" not in obj or "mlp" not in obj or len(obj["mlp"]) != 2:
            raise ModelFormatError(f"{where}: gin layer needs 'eps' and a 2-entry 'mlp'")
        mlp = tuple(
            _dense_from_json(sub, "relu", where=f"{where} mlp[{s}]")
            for s, sub in enumerate(obj["mlp"])
        )
        return ConvLayer(kind="gin", eps=float(obj["eps"]), mlp=mlp)
    raise ModelFormatError(f"unknown arch {arch!r}; expected gcn, sage or gin")


def _apply_bn_blocks(arch, convs, bn_blocks):
    if bn_blocks is None:
        return convs
    if len(bn_blocks) != len(convs):
        raise ModelFormatError(
            f"'bn' lists {len(bn_blocks)} blocks for {len(convs)} conv layers"
        )
    folded = []
    for i, (layer, bn) in enumerate(zip(convs, bn_blocks)):
        if bn is None:
            folded.append(layer)
            continue
        if arch == "gcn":
            folded.append(ConvLayer(kind="gcn", dense=_fold_bn_into_dense(layer.dense, bn)))
        elif arch == "gin":
            inner = (layer.mlp[0], _fold_bn_into_dense(layer.mlp[1], bn))
            folded.append(ConvLayer(kind="gin", eps=layer.eps, mlp=inner))
        else:  # sage: scale both branches, shift the bias
            w_bn, b_bn = fold_batchnorm(
                bn["mu"], bn["var"], float(bn["eps"]), bn["W"], bn["B"]
            )
            old_b = layer.bias if layer.bias is not None else np.zeros(layer.out_dim)
            folded.append(
                ConvLayer(
                    kind="sage",
                    w_phi=layer.w_phi * w_bn[None, :],
                    w_psi=layer.w_psi * w_bn[None, :],
                    bias=old_b * w_bn + b_bn,
                )
            )
    return folded


def model_from_json_dict(obj: dict) -> ModelSpec:
    for key in ("arch", "conv_layers", "classifier", "num_classes"):
        if key not in obj:
            raise ModelFormatError(f"model file missing required field {key!r}")
    arch = obj["arch"]
    convs = [
        _conv_from_json(arch, layer, where=f"conv_layers[{i}]")
        for i, layer in enumerate(obj["conv_layers"])
    ]
    convs = _apply_bn_blocks(arch, convs, obj.get("bn"))
    classifier = []
    n_clf = len(obj["classifier"])
    for k, layer in enumerate(obj["classifier"]):
        activation = "relu" if k < n_clf - 1 else "none"
        classifier.append(_dense_from_json(layer, activation, where=f"classifier[{k}]"))
    return ModelSpec(
        conv_layers=tuple(convs),
        classifier=tuple(classifier),
        pooling=obj.get("pooling", "mean"),
        num_classes=int(obj["num_classes"]),
    )


def load_model(path) -> ModelSpec:
    """Load a model JSON file, folding any batch-norm blocks on the way in."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
    return model_from_json_dict(obj)


def model_to_json_dict(model: ModelSpec) -> dict:
    def dense(layer):
        out = {"W": layer.weight.tolist()}
        if layer.bias is not None:
            out["B"] = layer.bias.tolist()
        return out

    convs = []
    for layer in model.conv_layers:
        if layer.kind == "gcn":
            convs.append(dense(layer.dense))
        elif layer.kind == "sage":
            entry = {"W_phi": layer.w_phi.tolist(), "W_psi": layer.w_psi.tolist()}
            if layer.bias is not None:
                entry["B"] = layer.bias.tolist()
            convs.append(entry)
        else:
            convs.append({"eps": layer.eps, "mlp": [dense(sub) for sub in layer.mlp]})
    return {
        "arch": model.arch,
        "conv_layers": convs,
        "pooling": model.pooling,
        "classifier": [dense(layer) for layer in model.classifier],
        "num_classes": model.num_classes,
    }


def save_model(model: ModelSpec, path) -> None:
    Path(path).write_text(json.dumps(model_to_json_dict(model), sort_keys=True, indent=1))


def random_model(
    arch: str,
    *,
    in_dim: int = 10,
    hidden: int = 8,
    num_layers: int = 3,
    clf_hidden: int = 8,
    num_classes: int = 2,
    pooling: str = "mean",
    with_bias: bool = True,
    rng=None,
    seed: int | None = None,
) -> ModelSpec:
    """Build a randomly weighted model of the given kind, for experiments."""
    if rng is None:
        rng = np.random.default_rng(seed)

    def weights(n_in, n_out):
        return rng.normal(scale=1.0 / np.sqrt(n_in), size=(n_in, n_out))

    def bias(n_out):
        return rng.normal(scale=0.2, size=n_out) if with_bias else None

    convs = []
    dims = [in_dim] + [hidden] * num_layers
    for l in range(num_layers):
        n_in, n_out = dims[l], dims[l + 1]
        if arch == "gcn":
            convs.append(ConvLayer(kind="gcn", dense=DenseLayer(weights(n_in, n_out), bias(n_out))))
        elif arch == "sage":
            convs.append(
                ConvLayer(kind="sage", w_phi=weights(n_in, n_out), w_psi=weights(n_in, n_out),
                          bias=bias(n_out))
            )
        elif arch == "gin":
            mlp = (
                DenseLayer(weights(n_in, n_out), bias(n_out)),
                DenseLayer(weights(n_out, n_out), bias(n_out)),
            )
            convs.append(ConvLayer(kind="gin", eps=float(rng.normal(scale=0.5)), mlp=mlp))
        else:
            raise ModelFormatError(f"unknown arch {arch!r}")
    classifier = (
        DenseLayer(weights(hidden, clf_hidden), bias(clf_hidden), "relu"),
        DenseLayer(weights(clf_hidden, num_classes), bias(num_classes), "none"),
    )
    return ModelSpec(tuple(convs), classifier, pooling=pooling, num_classes=num_classes)
