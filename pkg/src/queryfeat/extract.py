"""Turn (documents, queries) into a feature matrix.

Pipeline per cell: split the document into whitespace-word chunks, render
one prompt per chunk, obtain yes/no log-probabilities from the scorer,
calibrate each chunk to p = exp(ly) / (exp(ly) + exp(ln)), and pool by
taking the per-feature maximum over chunks. Values live in [0, 1] and can
be binarized with a fixed > 0.5 rule (ties map to 0, "no").

The calibration is computed as 1 / (1 + exp(ln - ly)) via a two-branch
sigmoid so extreme logits neither overflow nor lose the exact 0.5 point.

Feature matrices serialize to a CSV cache (header ``doc_id,<query ids>``,
17-significant-digit decimal cells) plus a provenance sidecar JSON naming
the scorer identity, chunking config, template ids, and content hashes;
cells whose provenance matches are never re-scored.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import Dataset, FeatureQuery, QuerySet, validate_compatible
from .errors import DataError, ScorerError
from .scorer import Scorer, ScoreRequest, ScoreResponse

DELIMITER = "\n--------------\n"

PROVENANCE_SUFFIX = ".provenance.json"


@dataclass(frozen=True)
class PromptTemplate:
    """Pure concatenation template: preamble + delimiter + text + delimiter + question."""

    template_id: str
    preamble: str
    delimiter: str = DELIMITER

    def render(self, chunk: str, question: str) -> str:
        if not question:
            raise DataError("cannot render a prompt for an empty question")
        return self.preamble + self.delimiter + chunk + self.delimiter + question


TEMPLATES: dict[str, PromptTemplate] = {
    t.template_id: t
    for t in (
        PromptTemplate("clinical-note", "Read the following text from a clinical note:"),
        PromptTemplate("cxr-report", "Read the following Chest X-ray report:"),
    )
}


def get_template(template_id: str) -> PromptTemplate:
    try:
        return TEMPLATES[template_id]
    except KeyError:
        raise DataError(
            f"unknown template_id {template_id!r}; known: {sorted(TEMPLATES)}"
        ) from None


def render_prompt(template: PromptTemplate | str, chunk: str, query: FeatureQuery) -> str:
    if isinstance(template, str):
        template = get_template(template)
    return template.render(chunk, query.question)


def split_prompt(prompt: str, delimiter: str = DELIMITER) -> tuple[str, str, str]:
    """Recover (preamble, source text, question) from a rendered prompt."""
    first = prompt.find(delimiter)
    last = prompt.rfind(delimiter)
    if first < 0 or last <= first:
        raise ScorerError("prompt does not contain the template delimiters")
    return (
        prompt[:first],
        prompt[first + len(delimiter) : last],
        prompt[last + len(delimiter) :],
    )


@dataclass(frozen=True)
class ChunkingConfig:
    """Greedy left-to-right packing of token units; paper-matching defaults."""

    max_tokens_per_chunk: int = 512
    max_chunks: int = 4
    token_unit: str = "whitespace-words"

    def __post_init__(self):
        if self.max_tokens_per_chunk < 1 or self.max_chunks < 1:
            raise DataError("chunking sizes must be positive")
        if self.token_unit == "backend-tokens":
            raise DataError(
                "token_unit 'backend-tokens' needs a backend tokenizer, which the "
                "v1 wire protocol does not expose; use 'whitespace-words'"
            )
        if self.token_unit != "whitespace-words":
            raise DataError(f"unknown token_unit {self.token_unit!r}")

    def to_json(self) -> dict:
        return {
            "max_tokens_per_chunk": self.max_tokens_per_chunk,
            "max_chunks": self.max_chunks,
            "token_unit": self.token_unit,
        }


def chunk_document(text: str, cfg: ChunkingConfig = ChunkingConfig()) -> list[str]:
    """Pack whitespace words into chunks; anything past max_chunks is dropped."""
    words = text.split()
    size = cfg.max_tokens_per_chunk
    chunks = []
    for start in range(0, len(words), size):
        if len(chunks) == cfg.max_chunks:
            break
        chunks.append(" ".join(words[start : start + size]))
    return chunks


def stable_sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def continuous_feature(responses: Sequence[ScoreResponse]) -> float:
    """Per chunk: mass of "yes" over {"yes","no"}; pooled with max over chunks."""
    if not responses:
        raise DataError("continuous_feature needs at least one chunk response")
    return max(stable_sigmoid(r.logprob_yes - r.logprob_no) for r in responses)


def binarize(value: float) -> int:
    if not 0.0 <= value <= 1.0:
        raise DataError(f"feature value {value!r} outside [0, 1]")
    return 1 if value > 0.5 else 0


def score_document(
    text: str, question: str, template_id: str, scorer: Scorer, cfg: ChunkingConfig
) -> float:
    """Chunk, render, score, calibrate, max-pool one (document, question) cell."""
    chunks = chunk_document(text, cfg)
    if not chunks:
        raise DataError("document is empty after tokenization (whitespace-only text)")
    template = get_template(template_id)
    responses = []
    for chunk in chunks:
        prompt = template.render(chunk, question)
        responses.append(scorer.score(ScoreRequest(prompt=prompt)))
    return continuous_feature(responses)


def dataset_content_hash(doc_ids: Sequence[str], texts: Sequence[str]) -> str:
    digest = hashlib.sha256()
    for doc_id, text in zip(doc_ids, texts):
        digest.update(doc_id.encode("utf-8"))
        digest.update(b"\x1f")
        digest.update(text.encode("utf-8"))
        digest.update(b"\x1e")
    return digest.hexdigest()[:16]


def queries_content_hash(queries: Iterable[FeatureQuery]) -> str:
    digest = hashlib.sha256()
    for q in queries:
        digest.update(f"{q.query_id}\x1f{q.question}\x1f{q.template_id}\x1e".encode("utf-8"))
    return digest.hexdigest()[:16]


class FeatureMatrix:
    """documents x queries grid of calibrated values in [0, 1]."""

    def __init__(
        self,
        doc_ids: Sequence[str],
        query_ids: Sequence[str],
        values: np.ndarray,
        provenance: dict,
    ):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(doc_ids), len(query_ids)):
            raise DataError(
                f"matrix shape {values.shape} does not match "
                f"{len(doc_ids)} docs x {len(query_ids)} queries"
            )
        finite = values[np.isfinite(values)]
        if finite.size and (finite.min() < 0.0 or finite.max() > 1.0):
            raise DataError("feature values must lie in [0, 1]")
        self.doc_ids = tuple(doc_ids)
        self.query_ids = tuple(query_ids)
        self.values = values
        self.provenance = provenance
        self._doc_index = {d: i for i, d in enumerate(self.doc_ids)}
        self._query_index = {q: j for j, q in enumerate(self.query_ids)}

    def value(self, doc_id: str, query_id: str) -> float:
        return float(self.values[self._doc_index[doc_id], self._query_index[query_id]])

    def row(self, doc_id: str) -> np.ndarray:
        return self.values[self._doc_index[doc_id]]

    def binarized(self) -> np.ndarray:
        return (self.values > 0.5).astype(np.float64)

    def select_queries(self, query_ids: Sequence[str]) -> "FeatureMatrix":
        """Column subset (e.g. dropping custom queries); provenance is rederived."""
        missing = [q for q in query_ids if q not in self._query_index]
        if missing:
            raise DataError(f"feature matrix is missing query columns: {missing}")
        cols = [self._query_index[q] for q in query_ids]
        provenance = dict(self.provenance)
        provenance["query_ids"] = list(query_ids)
        return FeatureMatrix(self.doc_ids, query_ids, self.values[:, cols], provenance)

    def select_docs(self, doc_ids: Sequence[str]) -> "FeatureMatrix":
        missing = [d for d in doc_ids if d not in self._doc_index]
        if missing:
            raise DataError(f"feature matrix is missing documents: {missing[:5]}")
        rows = [self._doc_index[d] for d in doc_ids]
        return FeatureMatrix(doc_ids, self.query_ids, self.values[rows], self.provenance)

    def save(self, path: str | Path) -> None:
        """Write the CSV cache plus its provenance sidecar."""
        path = Path(path)
        lines = ["doc_id," + ",".join(self.query_ids)]
        for i, doc_id in enumerate(self.doc_ids):
            cells = []
            for j in range(len(self.query_ids)):
                v = self.values[i, j]
                cells.append("" if math.isnan(v) else format(float(v), ".17g"))
            lines.append(doc_id + "," + ",".join(cells))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        sidecar = path.with_name(path.name + PROVENANCE_SUFFIX)
        sidecar.write_text(
            json.dumps(self.provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "FeatureMatrix":
        path = Path(path)
        if not path.exists():
            raise DataError(f"feature file not found: {path}")
        lines = path.read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("doc_id,"):
            raise DataError(f"{path}: missing 'doc_id,...' header line")
        query_ids = lines[0].split(",")[1:]
        doc_ids, rows = [], []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(query_ids) + 1:
                raise DataError(f"{path}:{lineno}: expected {len(query_ids) + 1} fields")
            doc_ids.append(cells[0])
            rows.append([float(c) if c else math.nan for c in cells[1:]])
        sidecar = path.with_name(path.name + PROVENANCE_SUFFIX)
        provenance = {}
        if sidecar.exists():
            provenance = json.loads(sidecar.read_text(encoding="utf-8"))
        return cls(doc_ids, query_ids, np.array(rows, dtype=np.float64), provenance)


def build_provenance(
    dataset: Dataset, queries: QuerySet, scorer: Scorer, cfg: ChunkingConfig
) -> dict:
    return {
        "scorer": scorer.identity,
        "chunking": cfg.to_json(),
        "templates": {q.query_id: q.template_id for q in queries.queries},
        "dataset_hash": dataset_content_hash(
            [d.doc_id for d in dataset.documents], [d.text for d in dataset.documents]
        ),
        "queries_hash": queries_content_hash(queries.queries),
        "query_ids": list(queries.query_ids),
    }


def extract_matrix(
    dataset: Dataset,
    queries: QuerySet,
    scorer: Scorer,
    cfg: ChunkingConfig = ChunkingConfig(),
    cache: str | Path | None = None,
    progress: Callable[[int, int], None] | None = None,
    doc_ids: Sequence[str] | None = None,
) -> FeatureMatrix:
    """Score every (document, query) cell; cells cached under matching provenance.

    On scorer failure the completed cells are flushed to the cache (when one
    was given) before the error propagates.
    """
    if not dataset.documents:
        raise DataError("cannot extract features from an empty dataset")
    if not queries.queries:
        raise DataError("cannot extract features with an empty query set")
    validate_compatible(dataset, queries)
    docs = list(dataset.documents)
    if doc_ids is not None:
        wanted = set(doc_ids)
        docs = [d for d in docs if d.doc_id in wanted]
        missing = wanted - {d.doc_id for d in docs}
        if missing:
            raise DataError(f"unknown doc_ids requested: {sorted(missing)}")
    for doc in docs:
        if not doc.text.split():
            raise DataError(f"document {doc.doc_id!r} is whitespace-only; cannot be chunked")

    provenance = build_provenance(dataset, queries, scorer, cfg)
    qids = list(queries.query_ids)
    n_rows, n_cols = len(docs), len(qids)
    values = np.full((n_rows, n_cols), np.nan, dtype=np.float64)

    cache_path = Path(cache) if cache else None
    if cache_path is not None and cache_path.exists():
        cached = FeatureMatrix.load(cache_path)
        if cached.provenance == provenance:
            for i, doc in enumerate(docs):
                if doc.doc_id not in cached._doc_index:
                    continue
                for j, qid in enumerate(qids):
                    if qid in cached._query_index:
                        values[i, j] = cached.value(doc.doc_id, qid)

    pending = [
        (i, j) for i in range(n_rows) for j in range(n_cols) if math.isnan(values[i, j])
    ]
    total = n_rows * n_cols
    done = total - len(pending)

    def compute(cell: tuple[int, int]) -> tuple[int, int, float]:
        i, j = cell
        query = queries.queries[j]
        value = score_document(docs[i].text, query.question, query.template_id, scorer, cfg)
        return i, j, value

    def flush() -> None:
        if cache_path is None:
            return
        keep = [i for i in range(n_rows) if np.isfinite(values[i]).any()]
        partial = FeatureMatrix(
            [docs[i].doc_id for i in keep], qids, values[keep], provenance
        )
        partial.save(cache_path)

    try:
        workers = min(getattr(scorer, "max_concurrency", 1), max(1, len(pending)))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for i, j, value in pool.map(compute, pending):
                    values[i, j] = value
                    done += 1
                    if progress:
                        progress(done, total)
        else:
            for cell in pending:
                i, j, value = compute(cell)
                values[i, j] = value
                done += 1
                if progress:
                    progress(done, total)
    except ScorerError:
        flush()
        raise

    matrix = FeatureMatrix([d.doc_id for d in docs], qids, values, provenance)
    if cache_path is not None and pending:
        matrix.save(cache_path)
    return matrix
