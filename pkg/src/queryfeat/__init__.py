"""queryfeat: expert yes/no queries, scored by an LLM backend, as calibrated
features for small interpretable linear classifiers."""

__version__ = "0.1.0"

from .core import Dataset, Document, FeatureQuery, QuerySet, load_dataset, load_queries
from .errors import DataError, IllDefinedMetricError, QueryfeatError, ScorerError
from .extract import ChunkingConfig, FeatureMatrix, extract_matrix
from .linear import LinearModel, TrainConfig, explain, predict_proba, prune, train
from .scorer import HttpScorer, MockLexicon, MockScorer, NoisyScorer, ScoreRequest, ScoreResponse

__all__ = [
    "ChunkingConfig",
    "DataError",
    "Dataset",
    "Document",
    "FeatureMatrix",
    "FeatureQuery",
    "HttpScorer",
    "IllDefinedMetricError",
    "LinearModel",
    "MockLexicon",
    "MockScorer",
    "NoisyScorer",
    "QueryfeatError",
    "QuerySet",
    "ScoreRequest",
    "ScoreResponse",
    "ScorerError",
    "TrainConfig",
    "explain",
    "extract_matrix",
    "load_dataset",
    "load_queries",
    "predict_proba",
    "prune",
    "train",
]
