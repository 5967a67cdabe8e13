import numpy as np
import pytest

from graphattr import (
    Explanation,
    Graph,
    attribute,
    discriminability,
    embed_subgraph,
    extract_explanation,
    fidelity,
    fidelity_curve,
    generate_ba2motifs,
    run_forward,
    stability,
)
from graphattr.metrics import discriminability_report, stability_report

from helpers import random_graph, small_model


def _sample(seed=0, n=8, edge_prob=0.6):
    rng = np.random.default_rng(seed)
    model = small_model("gcn", n_in=3, seed=seed)
    g = random_graph(n, 3, rng, edge_prob=edge_prob)
    return model, g


def test_extraction_ceiling_arithmetic():
    model, g = _sample(1)
    attr = attribute(model, g)
    num_edges = len(attr.edges)
    assert num_edges >= 3
    expl = extract_explanation(attr, g, 0.9, 0)
    assert len(expl.edges) == int(np.ceil(0.1 * num_edges))
    assert expl.sparsity == 1.0 - len(expl.edges) / num_edges


def test_sparsity_zero_selects_everything():
    model, g = _sample(2)
    attr = attribute(model, g)
    expl = extract_explanation(attr, g, 0.0, 1)
    assert sorted(expl.edges) == sorted(attr.edges)
    assert expl.sparsity == 0.0


def test_extraction_invariant_under_positive_rescaling():
    model, g = _sample(3)
    attr = attribute(model, g)
    before = extract_explanation(attr, g, 0.6, 0).edges
    attr.edge_scores = attr.edge_scores * 2.5
    after = extract_explanation(attr, g, 0.6, 0).edges
    assert before == after


def test_extraction_rejects_bad_sparsity_and_empty_graph():
    model, g = _sample(4)
    attr = attribute(model, g)
    with pytest.raises(ValueError, match="sparsity"):
        extract_explanation(attr, g, 1.0, 0)
    lone = Graph(adjacency=np.zeros((2, 2)), features=np.ones((2, 3)))
    empty_attr = attribute(model, lone)
    with pytest.raises(ValueError, match="no edges"):
        extract_explanation(empty_attr, lone, 0.5, 0)


def test_fidelity_of_empty_explanation_is_exactly_zero():
    model, g = _sample(5)
    expl = Explanation(0, (), (), 1.0, 0, "empty")
    assert fidelity(model, g, expl) == 0.0


def test_fidelity_of_full_removal_matches_double_forward():
    model, g = _sample(6)
    attr = attribute(model, g)
    expl = extract_explanation(attr, g, 0.0, 0)
    got = fidelity(model, g, expl)
    base = run_forward(model, g)
    y = int(np.argmax(base.probs))
    stripped = g.with_edges_removed(g.undirected_edges())
    assert not stripped.adjacency.any()
    expected = base.probs[y] - run_forward(model, stripped).probs[y]
    assert got == pytest.approx(expected, abs=1e-15)


def test_embedding_of_full_explanation_matches_plain_forward():
    model, g = _sample(7)
    attr = attribute(model, g)
    expl = extract_explanation(attr, g, 0.0, 0)
    emb = embed_subgraph(model, g, expl)
    np.testing.assert_array_equal(emb, run_forward(model, g).pooled)


def test_embedding_of_empty_explanation_is_structural():
    model, g = _sample(8)
    expl = Explanation(0, (), (), 1.0, 0, "empty")
    emb = embed_subgraph(model, g, expl)
    edgeless = g.with_only_edges([])
    np.testing.assert_array_equal(emb, run_forward(model, edgeless).pooled)


def test_isomorphic_explanations_embed_identically():
    model = small_model("gin", n_in=2, seed=9)
    rng = np.random.default_rng(10)
    g = random_graph(6, 2, rng, edge_prob=0.5, features=np.ones((6, 2)))
    perm = np.array([2, 0, 4, 5, 1, 3])
    g_p = Graph(adjacency=g.adjacency[np.ix_(perm, perm)], features=np.ones((6, 2)))
    inverse = np.argsort(perm)
    edges = g.undirected_edges()[:3]
    edges_p = tuple(tuple(sorted((int(inverse[u]), int(inverse[v])))) for u, v in edges)
    e1 = Explanation(0, tuple(edges), (0.0,) * 3, 0.5, 0, "a")
    e2 = Explanation(1, edges_p, (0.0,) * 3, 0.5, 0, "b")
    emb1 = embed_subgraph(model, g, e1)
    emb2 = embed_subgraph(model, g_p, e2)
    np.testing.assert_allclose(emb1, emb2, atol=1e-12)
    assert e1.canonical_key == "a"  # keys are caller-provided here


def test_discriminability_unit_values():
    same = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    labels = [0, 0, 1, 1]
    assert discriminability(same, labels, labels, 0, 1) == 0.0
    orth = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    val = discriminability(orth, labels, labels, 0, 1)
    assert abs(val - np.sqrt(2.0)) < 1e-12
    assert discriminability(orth, labels, labels, 1, 0) == val


def test_discriminability_filters_wrong_predictions():
    emb = np.array([[1.0, 0.0], [9.0, 9.0], [0.0, 1.0], [9.0, 9.0]])
    true = [0, 0, 1, 1]
    pred = [0, 1, 1, 0]  # second and fourth samples are mispredicted
    val = discriminability(emb, true, pred, 0, 1)
    assert abs(val - np.sqrt(2.0)) < 1e-12


def test_discriminability_names_empty_class():
    emb = np.ones((2, 2))
    with pytest.raises(ValueError, match="class 1"):
        discriminability(emb, [0, 0], [0, 0], 0, 1)


def _expl(key):
    return Explanation(0, ((0, 1),), (1.0,), 0.5, 0, key)


def test_stability_identical_and_distinct():
    same = [_expl("k") for _ in range(5)]
    assert stability(same, 1) == 1.0
    distinct = [_expl(f"k{i}") for i in range(5)]
    for k in range(1, 6):
        assert stability(distinct, k) == pytest.approx(k / 5)


def test_stability_monotone_and_order_invariant():
    keys = ["a", "a", "a", "b", "b", "c"]
    expls = [_expl(k) for k in keys]
    vals = [stability(expls, k) for k in range(1, 5)]
    assert vals == sorted(vals)
    assert vals[2] == 1.0  # three groups cover everything
    shuffled = [expls[i] for i in (3, 0, 5, 1, 4, 2)]
    assert [stability(shuffled, k) for k in range(1, 5)] == vals


def test_fidelity_curve_single_graph_has_zero_std():
    model = small_model("gcn", n_in=10, seed=11)
    ds = generate_ba2motifs(1, base_size=10, seed=12)
    report = fidelity_curve(model, ds, [0.5, 0.7])
    for entry in report.summary.values():
        assert entry["std"] == 0.0 and entry["n"] == 1


def test_fidelity_curve_matches_per_sample_records():
    model = small_model("gcn", n_in=10, seed=13)
    ds = generate_ba2motifs(4, base_size=8, seed=14)
    sparsities = [0.5, 0.6, 0.7, 0.8, 0.9]
    report = fidelity_curve(model, ds, sparsities)
    assert len(report.summary) == 5
    assert len(report.records) == len(ds.graphs) * 5
    for s in sparsities:
        vals = [r["fidelity"] for r in report.records if r["sparsity"] == s]
        assert report.summary[str(s)]["mean"] == pytest.approx(float(np.mean(vals)))


def test_reports_serialize(tmp_path):
    model = small_model("gcn", n_in=10, seed=15)
    ds = generate_ba2motifs(3, base_size=8, seed=16)
    report = stability_report(model, ds, 0.7, k_max=3)
    report.write_json(tmp_path / "r.json")
    report.write_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.json").exists()
    lines = (tmp_path / "r.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + len(ds.graphs)
    cov = report.summary["coverage"]
    assert cov["3"] >= cov["1"]


def test_discriminability_report_on_split_predictions():
    from helpers import degree_split_fixture

    model, ds = degree_split_fixture()
    disc = discriminability_report(model, ds, 0.7)
    assert set(disc.summary) == {"0-1"}
    assert disc.summary["0-1"] >= 0.0
    assert len(disc.records) == len(ds.graphs)
    assert all("e0" in r for r in disc.records)


def test_discriminability_at_sparsity_zero_matches_original_embeddings():
    from graphattr import discriminability
    from helpers import degree_split_fixture

    model, ds = degree_split_fixture()
    report = discriminability_report(model, ds, 0.0)
    # With every edge kept, explanation embeddings are the plain forward
    # embeddings, so the metric reduces to the original-embedding distance.
    embeddings = np.array([run_forward(model, g).pooled for g in ds.graphs])
    labels = [g.graph_label for g in ds.graphs]
    expected = discriminability(embeddings, labels, labels, 0, 1)
    assert report.summary["0-1"] == pytest.approx(expected, abs=1e-12)
