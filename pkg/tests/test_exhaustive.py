import numpy as np
import pytest

from graphattr import ScalarProduct, SizeGuardError, expand_all, oracle_attribute
from graphattr.exhaustive import oracle_attribute_all, reconstruction_gap

from helpers import ARCHES, random_graph, small_model


def test_single_product_splits_equally():
    z = ScalarProduct(constant=10.0, variables=("A11", "A12", "A23"), value=10.0)
    for edge in ("A11", "A12", "A23"):
        assert abs(oracle_attribute([z], "unique", edge) - 10.0 / 3.0) < 1e-12
        assert abs(oracle_attribute([z], "occurrence", edge) - 10.0 / 3.0) < 1e-12


def test_three_product_output_entry():
    products = [
        ScalarProduct(10.0, ("A11", "A12", "A23"), 10.0),
        ScalarProduct(8.0, ("A11", "A13", "A33"), 8.0),
        ScalarProduct(11.0, ("A12", "A21", "A13"), 11.0),
    ]
    assert abs(oracle_attribute(products, "unique", "A11") - 6.0) < 1e-12
    assert abs(oracle_attribute(products, "occurrence", "A11") - 6.0) < 1e-12


def test_unique_count_with_repeats():
    z = ScalarProduct(1.0, ("x", "x", "y"), 1.0)
    assert z.unique_count == 2
    # x occurs twice among three occurrences, so occurrence mode gives 2/3.
    assert abs(oracle_attribute([z], "occurrence", "x") - 2.0 / 3.0) < 1e-12
    assert abs(oracle_attribute([z], "unique", "x") - 0.5) < 1e-12


@pytest.mark.parametrize("arch", ARCHES)
def test_products_reconstruct_logits(arch):
    rng = np.random.default_rng(1)
    model = small_model(arch, layers=1, n_in=2, hidden=3, seed=4)
    g = random_graph(4, 2, rng)
    assert reconstruction_gap(model, g) < 1e-8


def test_two_layer_reconstruction():
    rng = np.random.default_rng(2)
    for arch in ARCHES:
        model = small_model(arch, layers=2, n_in=2, hidden=3, seed=5)
        g = random_graph(5, 2, rng)
        assert reconstruction_gap(model, g) < 1e-8


def test_zero_weight_model_leaves_bias_constants():
    model = small_model("gcn", layers=1, n_in=2, hidden=3, seed=0)
    from graphattr import ConvLayer, DenseLayer, ModelSpec

    conv = (ConvLayer(kind="gcn", dense=DenseLayer(np.zeros((2, 3)), np.array([1.0, 2.0, 3.0]))),)
    clf = (DenseLayer(np.zeros((3, 2)), np.array([0.5, -0.5]), "none"),)
    model = ModelSpec(conv, clf, pooling="mean", num_classes=2)
    g = random_graph(4, 2, np.random.default_rng(3))
    per_class = expand_all(model, g)
    for c, products in enumerate(per_class):
        alive = [z for z in products if z.value != 0.0]
        assert all(not z.variables for z in alive)
        assert abs(sum(z.value for z in alive) - model.classifier[-1].bias[c]) < 1e-12


def test_zero_valued_products_are_retained():
    model = small_model("gcn", layers=1, n_in=2, hidden=3, seed=6)
    g = random_graph(4, 2, np.random.default_rng(7), edge_prob=0.3)
    missing = [(i, j) for i in range(4) for j in range(4)
               if i != j and g.adjacency[i, j] == 0.0]
    assert missing, "fixture needs at least one absent edge"
    target = ("adj",) + missing[0]
    per_class = expand_all(model, g)
    carrying = [z for z in per_class[0] if target in z.variables]
    assert carrying and all(z.value == 0.0 for z in carrying)
    assert oracle_attribute(per_class[0], "occurrence", target) == 0.0


def test_modes_agree_on_repeat_free_products():
    model = small_model("gin", layers=2, n_in=2, hidden=3, seed=8)
    g = random_graph(4, 2, np.random.default_rng(9))
    for products in expand_all(model, g):
        repeat_free = [z for z in products if z.unique_count == len(z.variables)]
        assert repeat_free
        a = oracle_attribute_all(repeat_free, "unique")
        b = oracle_attribute_all(repeat_free, "occurrence")
        assert set(a) == set(b)
        for key in a:
            assert abs(a[key] - b[key]) < 1e-12


def test_equal_contribution_within_each_product():
    model = small_model("sage", layers=2, n_in=2, hidden=3, seed=10)
    g = random_graph(4, 2, np.random.default_rng(11))
    products = expand_all(model, g)[0]
    for z in products[:300]:
        unique = set(z.variables)
        if len(unique) < 2:
            continue
        shares = {v: oracle_attribute([z], "unique", v) for v in unique}
        values = list(shares.values())
        assert max(values) - min(values) < 1e-12


def test_size_guard_names_measured_bound():
    model = small_model("gcn", layers=1, n_in=2, hidden=3, seed=0)
    g = random_graph(7, 2, np.random.default_rng(0))
    with pytest.raises(SizeGuardError, match="nodes = 7"):
        expand_all(model, g)


def test_unknown_mode_rejected():
    with pytest.raises(ValueError, match="mode"):
        oracle_attribute([], "shapley", "x")
