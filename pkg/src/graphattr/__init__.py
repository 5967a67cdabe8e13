"""Training-free edge attribution for pretrained message-passing networks.

The package expands a network's output into matrix-valued term classes over
adjacency entries, features and activation patterns, attributes each output
class to individual edges by occurrence-weighted slot sweeps, and evaluates
the resulting explanations with fidelity, discriminability and stability
metrics.
"""

from .attribution import (
    AttributionResult,
    SlotContribution,
    attribute,
    hop_neighborhood,
    slot_sweep,
)
from .errors import GraphFormatError, ModelFormatError, SizeGuardError
from .exhaustive import (
    ScalarProduct,
    expand_all,
    oracle_attribute,
    oracle_attribute_all,
)
from .expansion import (
    OccurrenceCounts,
    TermClass,
    count_occurrences,
    enumerate_terms,
    evaluate_term,
)
from .forward import (
    ForwardTrace,
    normalize_adjacency,
    run_forward,
    run_zero_baseline,
    softmax,
)
from .graphs import (
    Dataset,
    Graph,
    generate_ba2motifs,
    load_graphs,
    save_dataset,
    save_graph,
)
from .metrics import (
    Explanation,
    MetricsReport,
    discriminability,
    discriminability_report,
    embed_subgraph,
    extract_explanation,
    fidelity,
    fidelity_curve,
    stability,
    stability_report,
)
from .models import (
    ConvLayer,
    DenseLayer,
    ModelSpec,
    fold_batchnorm,
    load_model,
    random_model,
    save_model,
)

__version__ = "0.1.0"

__all__ = [
    "AttributionResult",
    "ConvLayer",
    "Dataset",
    "DenseLayer",
    "Explanation",
    "ForwardTrace",
    "Graph",
    "GraphFormatError",
    "MetricsReport",
    "ModelFormatError",
    "ModelSpec",
    "OccurrenceCounts",
    "ScalarProduct",
    "SizeGuardError",
    "SlotContribution",
    "TermClass",
    "attribute",
    "count_occurrences",
    "discriminability",
    "discriminability_report",
    "embed_subgraph",
    "enumerate_terms",
    "evaluate_term",
    "expand_all",
    "extract_explanation",
    "fidelity",
    "fidelity_curve",
    "fold_batchnorm",
    "generate_ba2motifs",
    "hop_neighborhood",
    "load_graphs",
    "load_model",
    "normalize_adjacency",
    "oracle_attribute",
    "oracle_attribute_all",
    "random_model",
    "run_forward",
    "run_zero_baseline",
    "save_dataset",
    "save_graph",
    "save_model",
    "slot_sweep",
    "softmax",
    "stability",
    "stability_report",
]
