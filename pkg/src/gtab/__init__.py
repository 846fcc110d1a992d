"""gtab: attributed graphs -> per-node tabular features -> in-context classifiers."""

__version__ = "0.1.0"

from .errors import ComputeError, GtabError, TransportError, ValidationError
from .graph import (
    Graph,
    NormalizedOperators,
    SplitSpec,
    build_operators,
    from_edges,
    load_graph,
    load_split,
    save_graph,
    save_split,
)
from .tabularize import (
    FeatureMatrix,
    FeatureRecipe,
    assemble,
    enforce_budget,
    fingerprint,
    load_recipe,
    pool_graph,
    read_feature_matrix,
    write_feature_matrix,
    z_normalize,
)
from .classify import (
    BridgeBackend,
    Capabilities,
    ClassifierBackend,
    PredictionResult,
    backend_from_spec,
    builtin_knn,
    builtin_logreg,
    evaluate,
    fit_predict,
)

__all__ = [
    "__version__",
    "GtabError",
    "ValidationError",
    "ComputeError",
    "TransportError",
    "Graph",
    "NormalizedOperators",
    "SplitSpec",
    "from_edges",
    "load_graph",
    "save_graph",
    "load_split",
    "save_split",
    "build_operators",
    "FeatureRecipe",
    "FeatureMatrix",
    "assemble",
    "z_normalize",
    "enforce_budget",
    "pool_graph",
    "fingerprint",
    "load_recipe",
    "read_feature_matrix",
    "write_feature_matrix",
    "Capabilities",
    "ClassifierBackend",
    "PredictionResult",
    "BridgeBackend",
    "backend_from_spec",
    "builtin_logreg",
    "builtin_knn",
    "fit_predict",
    "evaluate",
]
