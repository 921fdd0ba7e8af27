"""Domain data model and file loading shared by the whole pipeline.

Documents, expert yes/no queries, and datasets are immutable after
construction and safe to share across threads. Loading is strict: every
invariant is checked up front so downstream stages can assume clean data.

File formats
------------
Dataset: UTF-8 JSON lines, one document per line::

    {"doc_id": str, "text": str, "labels": {label: 0|1},
     "split": "train"|"test", "reference_features": {query_id: 0|1}?}

Label keys may be plain names (a single-label task) or ``"group/member"``
(one label of a multi-label-group task); the task list is derived from the
keys seen across the file.

Query set: a single JSON document::

    {"name": str, "downstream": bool?, "queries": [
        {"query_id": str, "question": str, "template_id": str,
         "custom": bool, "expected_support": {task: "supports"|"not-relevant"}?}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

SPLITS = ("train", "test")
SUPPORT_VALUES = ("supports", "not-relevant")


@dataclass(frozen=True)
class Document:
    """One free-text record with per-label binary annotations.

    ``labels`` maps label name -> 0/1; a missing key means the document is
    unlabeled for that label and is excluded per-task downstream.
    ``reference_features`` maps query_id -> 0/1 ground-truth indicators
    (e.g. billing-code proxies or expert annotations) when available.
    """

    doc_id: str
    text: str
    labels: dict[str, int] = field(default_factory=dict)
    split: str = "train"
    reference_features: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class FeatureQuery:
    """An expert-written yes/no question that becomes one feature column."""

    query_id: str
    question: str
    template_id: str = "clinical-note"
    custom: bool = False
    expected_support: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class QuerySet:
    """Ordered collection of queries; order fixes feature-column order everywhere."""

    name: str
    queries: tuple[FeatureQuery, ...]
    downstream: bool = False

    @property
    def query_ids(self) -> list[str]:
        return [q.query_id for q in self.queries]

    def __getitem__(self, query_id: str) -> FeatureQuery:
        for q in self.queries:
            if q.query_id == query_id:
                return q
        raise KeyError(query_id)

    def __contains__(self, query_id: str) -> bool:
        return any(q.query_id == query_id for q in self.queries)

    def without_custom(self) -> "QuerySet":
        """Drop queries flagged custom, keeping order."""
        kept = tuple(q for q in self.queries if not q.custom)
        return QuerySet(name=f"{self.name}-no-custom", queries=kept, downstream=self.downstream)


@dataclass(frozen=True)
class TaskSpec:
    """A prediction task: either one label or a group of independent labels."""

    name: str
    kind: str  # "single-label" | "multi-label-group"
    labels: tuple[str, ...]  # label-column names, len 1 for single-label


@dataclass(frozen=True)
class Dataset:
    """Validated document collection with derived task structure."""

    documents: tuple[Document, ...]
    tasks: tuple[TaskSpec, ...]

    @property
    def doc_ids(self) -> list[str]:
        return [d.doc_id for d in self.documents]

    def split_docs(self, split: str) -> list[Document]:
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}; expected one of {SPLITS}")
        return [d for d in self.documents if d.split == split]

    def task(self, name: str) -> TaskSpec:
        for t in self.tasks:
            if t.name == name:
                return t
        raise DataError(f"unknown task {name!r}; known: {[t.name for t in self.tasks]}")

    def document(self, doc_id: str) -> Document:
        for d in self.documents:
            if d.doc_id == doc_id:
                return d
        raise DataError(f"unknown doc_id {doc_id!r}")


def _derive_tasks(label_names: list[str]) -> tuple[TaskSpec, ...]:
    """Group 'group/member' label keys into multi-label tasks, in first-seen order."""
    order: list[str] = []
    members: dict[str, list[str]] = {}
    kinds: dict[str, str] = {}
    for name in label_names:
        task, _, member = name.partition("/")
        kind = "multi-label-group" if member else "single-label"
        if task not in kinds:
            kinds[task] = kind
            members[task] = []
            order.append(task)
        elif kinds[task] != kind:
            raise DataError(
                f"label key {name!r} mixes single-label and grouped forms for task {task!r}"
            )
        if name not in members[task]:
            members[task].append(name)
    return tuple(TaskSpec(name=t, kind=kinds[t], labels=tuple(members[t])) for t in order)


def load_dataset(path: str | Path) -> Dataset:
    """Parse and validate a JSON-lines dataset file; document order = file order."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    documents: list[Document] = []
    seen: dict[str, int] = {}
    label_names: list[str] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON line: {exc}") from exc
            doc = _parse_document(raw, f"{path}:{lineno}")
            if doc.doc_id in seen:
                raise DataError(
                    f"duplicate doc_id {doc.doc_id!r} at lines {seen[doc.doc_id]} and {lineno}"
                )
            seen[doc.doc_id] = lineno
            for name in doc.labels:
                if name not in label_names:
                    label_names.append(name)
            documents.append(doc)
    if not documents:
        raise DataError(f"dataset file {path} contains no documents")
    return Dataset(documents=tuple(documents), tasks=_derive_tasks(label_names))


def _parse_document(raw: object, where: str) -> Document:
    if not isinstance(raw, dict):
        raise DataError(f"{where}: expected a JSON object per line")
    doc_id = raw.get("doc_id")
    if not isinstance(doc_id, str) or not doc_id:
        raise DataError(f"{where}: doc_id must be a non-empty string")
    text = raw.get("text")
    if not isinstance(text, str) or not text:
        raise DataError(f"{where}: text must be a non-empty string")
    split = raw.get("split", "train")
    if split not in SPLITS:
        raise DataError(f"{where}: unknown split value {split!r}; expected one of {SPLITS}")
    labels = raw.get("labels", {}) or {}
    if not isinstance(labels, dict):
        raise DataError(f"{where}: labels must be an object")
    for name, value in labels.items():
        if value not in (0, 1) or isinstance(value, bool):
            raise DataError(f"{where}: label must be 0 or 1 (got {value!r} for {name!r})")
    refs = raw.get("reference_features", {}) or {}
    if not isinstance(refs, dict):
        raise DataError(f"{where}: reference_features must be an object")
    for qid, value in refs.items():
        if value not in (0, 1) or isinstance(value, bool):
            raise DataError(
                f"{where}: reference feature must be 0 or 1 (got {value!r} for {qid!r})"
            )
    return Document(
        doc_id=doc_id,
        text=text,
        labels={str(k): int(v) for k, v in labels.items()},
        split=split,
        reference_features={str(k): int(v) for k, v in refs.items()},
    )


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset back out in the line format ``load_dataset`` reads."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for doc in dataset.documents:
            record: dict[str, object] = {
                "doc_id": doc.doc_id,
                "text": doc.text,
                "labels": doc.labels,
                "split": doc.split,
            }
            if doc.reference_features:
                record["reference_features"] = doc.reference_features
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_queries(path: str | Path, known_templates: set[str] | None = None) -> QuerySet:
    """Parse and validate a query-set JSON file; query order = file order."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"query file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON: {exc}") from exc
    return parse_queries(raw, where=str(path), known_templates=known_templates)


def parse_queries(
    raw: object, where: str = "<queries>", known_templates: set[str] | None = None
) -> QuerySet:
    """Validate an already-parsed query-set object (shared by file and HTTP paths)."""
    if known_templates is None:
        from .extract import TEMPLATES  # local import: extract depends on core

        known_templates = set(TEMPLATES)
    if not isinstance(raw, dict) or not isinstance(raw.get("queries"), list):
        raise DataError(f"{where}: expected an object with a 'queries' list")
    name = raw.get("name", "queries")
    queries: list[FeatureQuery] = []
    seen: set[str] = set()
    for i, entry in enumerate(raw["queries"]):
        if not isinstance(entry, dict):
            raise DataError(f"{where}: queries[{i}] must be an object")
        qid = entry.get("query_id")
        if not isinstance(qid, str) or not qid:
            raise DataError(f"{where}: queries[{i}].query_id must be a non-empty string")
        if qid in seen:
            raise DataError(f"{where}: duplicate query_id {qid!r}")
        seen.add(qid)
        question = entry.get("question")
        if not isinstance(question, str) or not question:
            raise DataError(f"{where}: query {qid!r} has an empty question")
        template_id = entry.get("template_id", "clinical-note")
        if template_id not in known_templates:
            raise DataError(
                f"{where}: query {qid!r} names unknown template_id {template_id!r}; "
                f"known: {sorted(known_templates)}"
            )
        support = entry.get("expected_support", {}) or {}
        if not isinstance(support, dict):
            raise DataError(f"{where}: query {qid!r} expected_support must be an object")
        for task, value in support.items():
            if value not in SUPPORT_VALUES:
                raise DataError(
                    f"{where}: query {qid!r} expected_support[{task!r}] must be one of "
                    f"{SUPPORT_VALUES} (got {value!r})"
                )
        queries.append(
            FeatureQuery(
                query_id=qid,
                question=question,
                template_id=template_id,
                custom=bool(entry.get("custom", False)),
                expected_support={str(k): str(v) for k, v in support.items()},
            )
        )
    return QuerySet(name=str(name), queries=tuple(queries), downstream=bool(raw.get("downstream", False)))


def queries_to_json(queries: QuerySet) -> dict:
    """Inverse of parse_queries."""
    out: dict[str, object] = {"name": queries.name, "queries": []}
    if queries.downstream:
        out["downstream"] = True
    for q in queries.queries:
        entry: dict[str, object] = {
            "query_id": q.query_id,
            "question": q.question,
            "template_id": q.template_id,
            "custom": q.custom,
        }
        if q.expected_support:
            entry["expected_support"] = q.expected_support
        out["queries"].append(entry)
    return out


def save_queries(queries: QuerySet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(queries_to_json(queries), indent=2) + "\n", encoding="utf-8")


def validate_compatible(dataset: Dataset, queries: QuerySet) -> None:
    """Cross-checks that only apply once a dataset and query set are used together."""
    label_names = {label for t in dataset.tasks for label in t.labels}
    task_names = {t.name for t in dataset.tasks}
    qids = set(queries.query_ids)
    for doc in dataset.documents:
        unknown = set(doc.reference_features) - qids
        if unknown:
            raise DataError(
                f"doc {doc.doc_id!r} has reference_features for unknown queries: {sorted(unknown)}"
            )
    for q in queries.queries:
        for task in q.expected_support:
            if task not in task_names and task not in label_names:
                raise DataError(
                    f"query {q.query_id!r} annotates unknown task {task!r}; "
                    f"dataset tasks: {sorted(task_names)}"
                )
