"""Self-enhancing compositional video event queries over scene graphs.

Natural-language queries compile to a region-graph DSL over relational
scene-graph tables. Predicates with no implementation are proposed,
generated (program-based or distilled-model), selected with budgeted
active learning, materialized into the store, and executed.
"""

__version__ = "0.1.0"

from .dsl import Query, parse, print_query, validate
from .errors import SceneqError
from .executor import evaluate, evaluate_naive
from .storage import ScenegraphDb, ingest_dataset
from .udfs import UdfCandidate, UdfKind, UdfRegistry, UdfSignature

__all__ = [
    "Query", "parse", "print_query", "validate", "SceneqError",
    "evaluate", "evaluate_naive", "ScenegraphDb", "ingest_dataset",
    "UdfCandidate", "UdfKind", "UdfRegistry", "UdfSignature", "__version__",
]
