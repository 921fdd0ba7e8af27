"""Comparison systems: TF-IDF bag-of-words features and direct zero-shot
prediction of the downstream label.

TF-IDF is pinned to one exact variant so entropy comparisons against the
query-feature models are meaningful: tokens are lowercased maximal
alphanumeric runs, the vocabulary keeps the top ``vocab_size`` terms by
document frequency (ties broken lexicographically), idf(t) =
ln((1+n)/(1+df(t))) + 1, and each row is raw count * idf divided by its
Euclidean norm (zero rows stay zero).
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Document
from .errors import DataError
from .extract import ChunkingConfig, FeatureMatrix, score_document
from .scorer import Scorer

TFIDF_VOCAB_SIZES = (30, 100, 1000, 30000)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class TfidfVocabulary:
    terms: tuple[str, ...]
    df: tuple[int, ...]
    n_docs: int

    def __post_init__(self):
        if len(set(self.terms)) != len(self.terms):
            raise DataError("vocabulary terms must be unique")
        if any(d < 1 for d in self.df):
            raise DataError("document frequencies must be >= 1")

    def idf(self) -> np.ndarray:
        df = np.asarray(self.df, dtype=np.float64)
        return np.log((1.0 + self.n_docs) / (1.0 + df)) + 1.0

    def to_json(self) -> dict:
        return {"terms": list(self.terms), "df": list(self.df), "n": self.n_docs}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TfidfVocabulary":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(terms=tuple(raw["terms"]), df=tuple(raw["df"]), n_docs=int(raw["n"]))


def fit_tfidf(train_docs: Sequence[Document], vocab_size: int) -> TfidfVocabulary:
    """Top vocab_size terms by document frequency; lexicographic tie-break."""
    if not train_docs:
        raise DataError("cannot fit a TF-IDF vocabulary on an empty corpus")
    if vocab_size < 1:
        raise DataError("vocab_size must be positive")
    df: Counter[str] = Counter()
    for doc in train_docs:
        df.update(set(tokenize(doc.text)))
    ranked = sorted(df, key=lambda t: (-df[t], t))[:vocab_size]
    return TfidfVocabulary(
        terms=tuple(ranked), df=tuple(df[t] for t in ranked), n_docs=len(train_docs)
    )


def tfidf_features(doc: Document, vocab: TfidfVocabulary) -> np.ndarray:
    """count * idf, L2-normalized; documents with no in-vocabulary terms are zero."""
    counts = Counter(tokenize(doc.text))
    raw = np.array([counts.get(t, 0) for t in vocab.terms], dtype=np.float64)
    vec = raw * vocab.idf()
    norm = float(np.sqrt(vec @ vec))
    return vec / norm if norm > 0 else vec


def tfidf_matrix(docs: Sequence[Document], vocab: TfidfVocabulary) -> FeatureMatrix:
    """Rows for many documents, packaged with term names as column ids."""
    values = np.vstack([tfidf_features(d, vocab) for d in docs])
    provenance = {
        "scorer": f"tfidf:{len(vocab.terms)}",
        "vocabulary_size": len(vocab.terms),
        "n_docs_fit": vocab.n_docs,
    }
    return FeatureMatrix([d.doc_id for d in docs], vocab.terms, values, provenance)


@dataclass(frozen=True)
class DownstreamQuery:
    """The task question itself, asked directly of the scorer."""

    task: str
    question: str
    template_id: str = "clinical-note"

    def __post_init__(self):
        if not self.question:
            raise DataError("downstream query question must be non-empty")


def zero_shot_downstream(
    doc: Document, dq: DownstreamQuery, scorer: Scorer, cfg: ChunkingConfig = ChunkingConfig()
) -> float:
    """Calibrated score for the downstream question; shares the feature code path,
    so the value is usable directly as a ranking score for AUROC."""
    return score_document(doc.text, dq.question, dq.template_id, scorer, cfg)
