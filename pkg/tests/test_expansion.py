import numpy as np
import pytest

from graphattr import (
    count_occurrences,
    enumerate_terms,
    evaluate_term,
    run_forward,
    run_zero_baseline,
)

from helpers import ARCHES, random_graph, small_model

REFERENCE_COUNTS = {"gcn": 6, "gin": 24, "sage": 17}


@pytest.mark.parametrize("arch", ARCHES)
def test_reference_term_counts(arch):
    model = small_model(arch, layers=3)
    assert len(enumerate_terms(model)) == REFERENCE_COUNTS[arch]


@pytest.mark.parametrize("arch", ARCHES)
def test_reconstruction_identity(arch):
    rng = np.random.default_rng(0)
    for trial in range(6):
        model = small_model(arch, layers=3, seed=trial)
        g = random_graph(int(rng.integers(3, 9)), 3, rng)
        trace = run_forward(model, g)
        terms = enumerate_terms(model)
        total = sum(evaluate_term(t, model, trace) for t in terms)
        np.testing.assert_allclose(total, trace.logits, rtol=1e-8, atol=1e-10)


def test_reconstruction_without_biases():
    model = small_model("sage", with_bias=False, seed=2)
    g = random_graph(5, 3, np.random.default_rng(3))
    trace = run_forward(model, g)
    terms = enumerate_terms(model)
    # Only feature-origin chains remain.
    assert all(t.origin[0] == "x" for t in terms)
    total = sum(evaluate_term(t, model, trace) for t in terms)
    np.testing.assert_allclose(total, trace.logits, rtol=1e-8, atol=1e-12)


def test_node_task_reconstruction():
    model = small_model("gin", layers=2, pooling="none", classes=3, seed=1)
    g = random_graph(5, 3, np.random.default_rng(4))
    trace = run_forward(model, g)
    total = sum(evaluate_term(t, model, trace) for t in enumerate_terms(model))
    assert total.shape == (5, 3)
    np.testing.assert_allclose(total, trace.logits, rtol=1e-8, atol=1e-10)


def test_final_bias_term_is_graph_independent():
    model = small_model("gcn", seed=6)
    terms = enumerate_terms(model)
    last_bias = [t for t in terms if t.origin == ("bias", ("clf", 1))]
    assert len(last_bias) == 1
    rng = np.random.default_rng(7)
    for _ in range(3):
        g = random_graph(5, 3, rng)
        value = evaluate_term(last_bias[0], model, run_forward(model, g))
        np.testing.assert_array_equal(value, model.classifier[1].bias)


def test_terms_vanish_on_zero_baseline():
    model = small_model("gcn", seed=8)
    baseline = run_zero_baseline(model, 5, 3)
    for term in enumerate_terms(model):
        value = evaluate_term(term, model, baseline)
        if term.origin[0] == "x" or term.adjacency_ops:
            np.testing.assert_array_equal(value, np.zeros_like(value))


def test_occurrence_counts_for_reference_gcn():
    model = small_model("gcn", layers=3)
    terms = enumerate_terms(model)
    x_term = next(t for t in terms if t.origin[0] == "x")
    as_vars = count_occurrences(x_term, features_as_variables=True)
    assert (as_vars.adjacency, as_vars.pattern, as_vars.feature) == (3, 4, 1)
    assert as_vars.denominator == 8
    as_consts = count_occurrences(x_term, features_as_variables=False)
    assert as_consts.denominator == 7

    first_clf_bias = next(t for t in terms if t.origin == ("bias", ("clf", 0)))
    counts = count_occurrences(first_clf_bias, features_as_variables=False)
    assert counts.pattern == 1 and counts.denominator == 1

    last_bias = next(t for t in terms if t.origin == ("bias", ("clf", 1)))
    assert count_occurrences(last_bias).denominator == 0


def test_signatures_render_the_expansion():
    model = small_model("gcn", layers=3)
    signatures = [t.signature() for t in enumerate_terms(model)]
    assert "V·V·V·X·W1·W2·W3·Wc1·Wc2 | patterns @ 1,2,3,c1" in signatures
    assert "V·V·B1·W2·W3·Wc1·Wc2 | patterns @ 1,2,3,c1" in signatures
    assert "Bc2 | patterns @ -" in signatures


def test_gin_branch_structure():
    model = small_model("gin", layers=3)
    terms = enumerate_terms(model)
    x_terms = [t for t in terms if t.origin[0] == "x"]
    assert len(x_terms) == 8  # two branch choices at each of three layers
    branch_sets = {t.branches for t in x_terms}
    assert ("adjacency", "adjacency", "adjacency") in branch_sets
    assert ("self", "self", "self") in branch_sets


def test_trace_model_mismatch_rejected():
    gcn = small_model("gcn", seed=0)
    gin = small_model("gin", seed=0)
    g = random_graph(4, 3, np.random.default_rng(0))
    trace = run_forward(gcn, g)
    term = enumerate_terms(gin)[0]
    with pytest.raises(ValueError, match="recorded for"):
        evaluate_term(term, gin, trace)
