"""Shared builders for the test suite."""

import numpy as np

from graphattr import (
    ConvLayer,
    Dataset,
    DenseLayer,
    Graph,
    ModelSpec,
    generate_ba2motifs,
    random_model,
    run_forward,
)


def random_graph(n, d, rng, edge_prob=0.5, features=None):
    upper = np.triu((rng.random((n, n)) < edge_prob).astype(float), 1)
    x = rng.normal(size=(n, d)) if features is None else features
    return Graph(adjacency=upper + upper.T, features=x)


def small_model(arch, *, layers=3, n_in=3, hidden=5, classes=2, pooling="mean", seed=0,
                with_bias=True):
    return random_model(
        arch,
        in_dim=n_in,
        hidden=hidden,
        num_layers=layers,
        clf_hidden=hidden,
        num_classes=classes,
        pooling=pooling,
        seed=seed,
        with_bias=with_bias,
    )


ARCHES = ("gcn", "gin", "sage")


def degree_split_fixture(num_graphs=6, base_size=8, seed=10):
    """A degree-summing model plus a dataset labeled by its own predictions.

    The decision threshold sits at the dataset median, so both classes are
    populated and every prediction is correct; useful wherever metrics need
    correctly predicted samples of both classes.
    """
    ds = generate_ba2motifs(num_graphs, base_size=base_size, seed=seed)
    conv = (ConvLayer(kind="gcn", dense=DenseLayer(np.ones((10, 1)), None)),)
    probe = ModelSpec(conv, (DenseLayer(np.ones((1, 2)), None, "none"),),
                      pooling="mean", num_classes=2)
    pooled = [float(run_forward(probe, g).pooled[0]) for g in ds.graphs]
    threshold = float(np.median(pooled))
    clf = (DenseLayer(np.array([[1.0, -1.0]]), np.array([-threshold, threshold]), "none"),)
    model = ModelSpec(conv, clf, pooling="mean", num_classes=2)
    relabeled = Dataset(
        tuple(
            Graph(g.adjacency, g.features,
                  graph_label=int(np.argmax(run_forward(model, g).probs)))
            for g in ds.graphs
        ),
        task="graph",
        num_classes=2,
    )
    labels = [g.graph_label for g in relabeled.graphs]
    assert 0 < sum(labels) < len(labels), "fixture must split predictions"
    return model, relabeled
