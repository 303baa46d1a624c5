"""Associative recall for recommender systems.

Each user gets a sparse feature relation matrix accumulated from the items
recommended to them. A new trigger item is expanded through that matrix into
a recall vector and matched against the user's own history by exact threshold
(or top-k) search, surfacing past recommendations the trigger brings to mind
for that particular user rather than just globally similar items.
"""

from .cooccurrence import BINARY, PROPORTIONAL, CooccurrenceKind, asymptotic, cooccur, cooccur_row
from .errors import (
    ConfigurationError,
    IntegrityError,
    NotFoundError,
    RecallKitError,
    ValidationError,
)
from .evaluation import ComparisonReport, DistanceShift, compare_trigger_vs_recall, delta_sweep, jaccard
from .ingestion import (
    Document,
    TfIdfModel,
    build_tfidf_model,
    ingest_corpus,
    read_corpus,
    tokenize,
    vectorize,
    vectorize_features,
)
from .recall import (
    IDENTITY,
    L2,
    Normalizer,
    RecalledItem,
    RecallRequest,
    RecallResult,
    normalize,
    recall_items,
    recall_vector,
    sigmoid,
)
from .relation import RelationMatrix
from .store import AppendResult, HistoryEvent, Store, UserHistory, load_snapshot, save_snapshot
from .vectors import (
    FeatureDictionary,
    ItemVector,
    Metric,
    SparseVector,
    distance,
    nearest,
    neighborhood,
)

__version__ = "0.1.0"

__all__ = [
    "BINARY",
    "IDENTITY",
    "L2",
    "PROPORTIONAL",
    "AppendResult",
    "ComparisonReport",
    "ConfigurationError",
    "CooccurrenceKind",
    "DistanceShift",
    "Document",
    "FeatureDictionary",
    "HistoryEvent",
    "IntegrityError",
    "ItemVector",
    "Metric",
    "NotFoundError",
    "Normalizer",
    "RecallKitError",
    "RecallRequest",
    "RecallResult",
    "RecalledItem",
    "RelationMatrix",
    "SparseVector",
    "Store",
    "TfIdfModel",
    "UserHistory",
    "ValidationError",
    "asymptotic",
    "build_tfidf_model",
    "compare_trigger_vs_recall",
    "cooccur",
    "cooccur_row",
    "delta_sweep",
    "distance",
    "ingest_corpus",
    "jaccard",
    "load_snapshot",
    "nearest",
    "neighborhood",
    "normalize",
    "read_corpus",
    "recall_items",
    "recall_vector",
    "save_snapshot",
    "sigmoid",
    "tokenize",
    "vectorize",
    "vectorize_features",
]
