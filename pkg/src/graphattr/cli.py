"""Command-line surface tying ingestion, attribution, the exhaustive
cross-check and the evaluation metrics into reproducible runs.

Exit codes: 0 on success, 2 for validation or usage errors, 3 when a
numerical suite exceeds its tolerance.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import exhaustive
from .attribution import attribute
from .errors import GraphFormatError, ModelFormatError, SizeGuardError
from .graphs import Dataset, Graph, generate_ba2motifs, load_graphs
from .metrics import (
    discriminability_report,
    extract_explanation,
    fidelity_curve,
    stability_report,
)
from .models import ModelSpec, load_model, random_model

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

DEFAULT_SEED = 7


def _parse_gen(spec: str) -> Dataset:
    parts = spec.split(":")
    if parts[0] != "ba2motifs" or len(parts) != 4:
        raise GraphFormatError(
            f"--gen expects 'ba2motifs:count:base_size:seed', got {spec!r}"
        )
    count, base, seed = (int(p) for p in parts[1:])
    return generate_ba2motifs(count, base_size=base, seed=seed)


def _load_dataset(args) -> Dataset:
    if getattr(args, "data", None):
        return load_graphs(args.data, fmt=getattr(args, "format", "json"))
    if getattr(args, "gen", None):
        return _parse_gen(args.gen)
    raise GraphFormatError("one of --data or --gen is required")


def _parse_sparsities(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise GraphFormatError(f"--sparsity: {exc}") from exc
    if not values or any(not 0.0 <= v < 1.0 for v in values):
        raise GraphFormatError("--sparsity values must lie in [0, 1)")
    return values


def _config_echo(args, **extra) -> dict:
    skip = {"func"}
    cfg = {k: v for k, v in vars(args).items() if k not in skip}
    for key in ("model", "data", "out"):
        if cfg.get(key):
            cfg[key] = str(Path(cfg[key]).resolve())
    cfg.update(extra)
    return cfg


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1))


def _explain_one(model, graph, idx, sparsities, classes, opts):
    try:
        attr = attribute(model, graph, **opts)
        if classes == "predicted":
            from .forward import run_forward

            probs = run_forward(model, graph).probs
            if model.pooling == "none":
                probs = probs[opts["target_row"]]
            target_classes = [int(np.argmax(probs))]
        else:
            target_classes = classes
        explanations = []
        for s in sparsities:
            for c in target_classes:
                expl = extract_explanation(attr, graph, s, c, graph_index=idx)
                explanations.append(
                    {
                        "sparsity_target": s,
                        "sparsity": expl.sparsity,
                        "class": c,
                        "edges": [[u, v] for u, v in expl.edges],
                        "scores": list(expl.scores),
                        "canonical_key": expl.canonical_key,
                    }
                )
    except (ValueError, KeyError) as exc:
        raise RuntimeError(f"graph {idx}: {exc}") from exc
    return idx, attr.to_json_dict(), explanations, attr.completeness_residual.tolist()


def cmd_explain(args) -> int:
    model = load_model(args.model)
    dataset = _load_dataset(args)
    sparsities = _parse_sparsities(args.sparsity)
    classes = "predicted" if args.cls == "predicted" else [
        int(c) for c in args.cls.split(",")
    ]
    opts = {
        "features_as_variables": args.x_as_vars,
        "calibrate": not args.no_calibrate,
        "target_row": args.row,
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    work = (
        delayed(_explain_one)(model, g, i, sparsities, classes, opts)
        for i, g in enumerate(dataset.graphs)
    )
    results = Parallel(n_jobs=args.jobs)(work) if args.jobs != 1 else [
        _explain_one(model, g, i, sparsities, classes, opts)
        for i, g in enumerate(dataset.graphs)
    ]
    results.sort(key=lambda r: r[0])

    residuals = {}
    for idx, attr_dict, explanations, residual in results:
        _dump_json(attr_dict, out / f"graph_{idx:04d}.attr.json")
        _dump_json(explanations, out / f"graph_{idx:04d}.expl.json")
        residuals[str(idx)] = residual
    manifest = {
        "command": "explain",
        "config": _config_echo(args, num_graphs=len(dataset.graphs)),
        "residuals": residuals,
        "max_abs_residual": max(max(r) for r in residuals.values()),
    }
    _dump_json(manifest, out / "manifest.json")
    print(f"wrote {len(results)} result pairs and manifest.json to {out}")
    return EXIT_OK


def _random_graph(n, d, rng, edge_prob=0.5):
    upper = np.triu((rng.random((n, n)) < edge_prob).astype(float), 1)
    return Graph(adjacency=upper + upper.T, features=rng.normal(size=(n, d)))


def _suite_reconstruction(models_graphs):
    worst = 0.0
    for model, graph, per_class in models_graphs:
        worst = max(worst, exhaustive.reconstruction_gap(model, graph, per_class))
    return worst


def _suite_mode_agreement(models_graphs):
    worst = 0.0
    for _, _, per_class in models_graphs:
        for products in per_class:
            repeat_free = [z for z in products if len(set(z.variables)) == len(z.variables)]
            by_unique = exhaustive.oracle_attribute_all(repeat_free, "unique")
            by_occurrence = exhaustive.oracle_attribute_all(repeat_free, "occurrence")
            for key, val in by_unique.items():
                worst = max(worst, abs(val - by_occurrence.get(key, 0.0)))
    return worst


def _suite_equal_contribution(models_graphs):
    worst = 0.0
    for _, _, per_class in models_graphs:
        for products in per_class:
            for z in products[:200]:
                unique = sorted(set(z.variables), key=repr)
                if len(unique) < 2:
                    continue
                shares = [exhaustive.oracle_attribute([z], "unique", v) for v in unique]
                worst = max(worst, max(shares) - min(shares))
    return worst


def _suite_equivalence(models_graphs, fault=False):
    worst = 0.0
    for model, graph, per_class in models_graphs:
        run_model = _perturb_model(model) if fault else model
        for fav in (False, True):
            res = attribute(run_model, graph, features_as_variables=fav, calibrate=False)
            expanded = per_class if fav else exhaustive.expand_all(
                model, graph, features_as_variables=False
            )
            n = graph.num_nodes
            for c, products in enumerate(expanded):
                acc = exhaustive.oracle_attribute_all(products, "occurrence")
                adj = np.zeros((n, n))
                pattern = {
                    ref: np.zeros(mat.shape[:-1])
                    for ref, mat in res.diagnostics["pattern_raw"].items()
                }
                for key, val in acc.items():
                    if key[0] == "adj":
                        adj[key[1], key[2]] = val
                    elif key[0] == "p" and key[1] in pattern:
                        pattern[key[1]][key[2], key[3]] = val
                worst = max(worst, np.abs(adj - res.diagnostics["adjacency_raw"][:, :, c]).max())
                for ref, mat in res.diagnostics["pattern_raw"].items():
                    worst = max(worst, np.abs(pattern[ref] - mat[..., c]).max())
    return worst


def _perturb_model(model: ModelSpec) -> ModelSpec:
    """Copy with one classifier weight nudged; used as a negative control."""
    from .models import DenseLayer

    last = model.classifier[-1]
    w = last.weight.copy()
    w[0, 0] += 0.1
    classifier = model.classifier[:-1] + (DenseLayer(w, last.bias, last.activation),)
    return ModelSpec(model.conv_layers, classifier, model.pooling, model.num_classes)


def cmd_terms(args) -> int:
    """Print each term class of the model's expansion for manual audit."""
    from .expansion import count_occurrences, enumerate_terms

    model = load_model(args.model)
    terms = enumerate_terms(model)
    print(f"{model.arch}: {model.num_conv_layers} conv layers, "
          f"{model.num_classifier_layers} classifier layers, "
          f"{len(terms)} term classes")
    for i, term in enumerate(terms):
        denom = count_occurrences(term, features_as_variables=args.x_as_vars).denominator
        print(f"  [{i:2d}] {term.signature()}   (variable slots: {denom})")
    return EXIT_OK


def cmd_check_oracle(args) -> int:
    if args.nodes > exhaustive.MAX_NODES or args.layers > exhaustive.MAX_CONV_LAYERS:
        print(
            f"refused: nodes={args.nodes} layers={args.layers} exceed the "
            f"guard ({exhaustive.MAX_NODES} nodes, {exhaustive.MAX_CONV_LAYERS} layers)",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    rng = np.random.default_rng(args.seed)
    arches = args.arches.split(",")
    cases = []
    for arch in arches:
        for _ in range(args.models_per_arch):
            model = random_model(
                arch,
                in_dim=2,
                hidden=3,
                num_layers=args.layers,
                clf_hidden=3,
                num_classes=2,
                rng=rng,
            )
            graph = _random_graph(args.nodes, 2, rng)
            per_class = exhaustive.expand_all(model, graph)
            cases.append((model, graph, per_class))

    suites = [
        ("reconstruction", _suite_reconstruction(cases), 1e-8),
        ("mode-agreement", _suite_mode_agreement(cases), 1e-12),
        ("equal-contribution", _suite_equal_contribution(cases), 1e-12),
        ("equivalence", _suite_equivalence(cases, fault=args.inject_fault), 1e-8),
    ]
    print(f"config: arches={arches} models-per-arch={args.models_per_arch} "
          f"nodes={args.nodes} layers={args.layers} seed={args.seed} "
          f"inject-fault={args.inject_fault}")
    failed = False
    for name, dev, tol in suites:
        status = "PASS" if dev <= tol else "FAIL"
        failed = failed or status == "FAIL"
        print(f"[{status}] {name}: max abs deviation {dev:.3e} (tolerance {tol:.0e})")
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    dataset = _load_dataset(args)
    opts = {
        "features_as_variables": args.x_as_vars,
        "calibrate": not args.no_calibrate,
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.sparsity is None:
        args.sparsity = "0.5,0.6,0.7,0.8,0.9" if args.metric == "fidelity" else "0.7"
    if args.metric == "fidelity":
        sparsities = _parse_sparsities(args.sparsity)
        report = fidelity_curve(model, dataset, sparsities, **opts)
        summary_rows = [
            {"sparsity": s, **report.summary[str(s)]} for s in sparsities
        ]
    elif args.metric == "discriminability":
        sparsity = _parse_sparsities(args.sparsity)[0]
        pairs = None
        if args.classes:
            c1, c2 = (int(c) for c in args.classes.split(","))
            pairs = [(c1, c2)]
        report = discriminability_report(
            model, dataset, sparsity, pairs, stage=args.stage, **opts
        )
        summary_rows = [
            {"classes": pair, "discriminability": val}
            for pair, val in sorted(report.summary.items())
        ]
    else:
        sparsity = _parse_sparsities(args.sparsity)[0]
        report = stability_report(model, dataset, sparsity, k_max=args.k, **opts)
        summary_rows = [
            {"k": k, "coverage": cov}
            for k, cov in sorted(report.summary["coverage"].items(), key=lambda kv: int(kv[0]))
        ]

    report.config = _config_echo(args)
    report.write_json(out / f"{args.metric}.json")
    report.write_csv(out / f"{args.metric}_records.csv")
    summary_path = out / f"{args.metric}_summary.csv"
    import csv as _csv

    with summary_path.open("w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=list(summary_rows[0].keys()))
        writer.writeheader()
        for row in summary_rows:
            writer.writerow(row)
    print(f"wrote {args.metric} report to {out}")
    return EXIT_OK


def _add_common_data_flags(p):
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--data", help="dataset JSON path")
    p.add_argument("--format", default="json", choices=["json", "edge_csv"])
    p.add_argument("--gen", help="synthetic dataset spec, e.g. ba2motifs:200:20:7")
    p.add_argument("--x-as-vars", action="store_true",
                   help="count node features as variables")
    p.add_argument("--no-calibrate", action="store_true",
                   help="skip the zero-input baseline subtraction")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphattr",
        description="Edge attribution and explanation metrics for pretrained GNNs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="write per-graph attributions and explanations")
    _add_common_data_flags(p)
    p.add_argument("--sparsity", default="0.7", help="comma list of sparsity targets")
    p.add_argument("--class", dest="cls", default="predicted",
                   help="'predicted' or a comma list of class indices")
    p.add_argument("--row", type=int, default=None,
                   help="target node row for node-classification models")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("terms", help="print a model's expansion term classes")
    p.add_argument("--model", required=True)
    p.add_argument("--x-as-vars", action="store_true")
    p.set_defaults(func=cmd_terms)

    p = sub.add_parser("check-oracle", help="run the exhaustive cross-check suites")
    p.add_argument("--arches", default="gcn,gin,sage")
    p.add_argument("--models-per-arch", type=int, default=10)
    p.add_argument("--nodes", type=int, default=5)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--inject-fault", action="store_true",
                   help="perturb one weight after expansion; the suites must fail")
    p.set_defaults(func=cmd_check_oracle)

    p = sub.add_parser("eval", help="dataset-level explanation metrics")
    _add_common_data_flags(p)
    p.add_argument("--metric", required=True,
                   choices=["fidelity", "discriminability", "stability"])
    p.add_argument("--sparsity", default=None,
                   help="defaults to the 0.5..0.9 grid for fidelity, 0.7 otherwise")
    p.add_argument("--classes", help="class pair for discriminability, e.g. 0,1")
    p.add_argument("--k", type=int, default=10, help="max k for stability coverage")
    p.add_argument("--stage", default="conv", choices=["conv", "pre_final"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GraphFormatError, ModelFormatError, SizeGuardError, ValueError,
            RuntimeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
