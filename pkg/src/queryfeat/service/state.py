"""File-backed session state and the job registry for the workbench service.

Single-process, desk-scale: queries, models, and annotations persist as JSON
under the state directory; feature matrices are content-addressed CSV caches.
SessionState mutations happen under one lock (single-writer); trained models
are immutable once registered and stay retrievable after query edits (the
query-set version lets clients detect staleness).
"""

from __future__ import annotations

import hashlib
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..core import Dataset, FeatureQuery, QuerySet, load_dataset, parse_queries, queries_to_json
from ..errors import DataError, QueryfeatError
from ..extract import (
    ChunkingConfig,
    FeatureMatrix,
    extract_matrix,
    dataset_content_hash,
    queries_content_hash,
)
from ..linear import LinearModel, TrainConfig, train
from ..scorer import Scorer

QUERIES_FILE = "queries.json"
VERSION_FILE = "version.json"


@dataclass
class Job:
    job_id: str
    kind: str  # extract | train | experiment
    content_address: str
    status: str = "queued"  # queued -> running -> done | failed
    completed: int = 0
    total: int = 0
    result: dict | None = None
    error: str | None = None

    def to_response(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "status": self.status,
            "progress": {"completed": self.completed, "total": self.total},
            "result": self.result,
            "error": self.error,
        }


class JobStore:
    """Content-addressed job registry with a small worker pool.

    Identical requests (same content address) share one job: resubmitting
    while it is queued/running/done returns the existing job_id. Failures
    never crash the server; they are recorded on the job verbatim.
    """

    def __init__(self, workers: int = 2):
        self._jobs: dict[str, Job] = {}
        self._by_address: dict[str, str] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=workers)

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def submit(self, kind: str, address: str, work: Callable[[Job], dict]) -> Job:
        with self._lock:
            existing_id = self._by_address.get(address)
            if existing_id is not None:
                existing = self._jobs[existing_id]
                if existing.status != "failed":
                    return existing
            job_id = f"job-{hashlib.sha256(address.encode()).hexdigest()[:10]}-{len(self._jobs)}"
            job = Job(job_id=job_id, kind=kind, content_address=address)
            self._jobs[job_id] = job
            self._by_address[address] = job_id
        self._pool.submit(self._run, job, work)
        return job

    def run_inline(self, kind: str, address: str, work: Callable[[Job], dict]) -> Job:
        """Execute synchronously (used for fast operations like training)."""
        with self._lock:
            existing_id = self._by_address.get(address)
            if existing_id is not None:
                existing = self._jobs[existing_id]
                if existing.status == "done":
                    return existing
            job_id = f"job-{hashlib.sha256(address.encode()).hexdigest()[:10]}-{len(self._jobs)}"
            job = Job(job_id=job_id, kind=kind, content_address=address)
            self._jobs[job_id] = job
            self._by_address[address] = job_id
        self._run(job, work)
        return job

    def _run(self, job: Job, work: Callable[[Job], dict]) -> None:
        job.status = "running"
        try:
            job.result = work(job)
            job.status = "done"
        except Exception as exc:  # error recorded, server stays up
            job.error = str(exc)
            job.status = "failed"

    def shutdown(self) -> None:
        self._pool.shutdown(wait=True)


@dataclass
class ModelRecord:
    model: LinearModel
    model_id: str
    variant: str
    query_set_version: int
    features_path: str  # matrix the model was trained/explained against
    parent: str | None = None

    def summary(self, current_version: int) -> dict:
        return {
            "model_id": self.model_id,
            "task": self.model.task,
            "variant": self.variant,
            "n_features": len(self.model.query_ids),
            "query_set_version": self.query_set_version,
            "stale": self.query_set_version != current_version,
            "train_fingerprint": self.model.train_fingerprint,
            "parent": self.parent,
        }


class SessionState:
    """Dataset + versioned query set + model registry + annotations."""

    def __init__(
        self,
        dataset_path: str | Path,
        queries_path: str | Path,
        state_dir: str | Path,
        scorer: Scorer,
        chunking: ChunkingConfig = ChunkingConfig(),
    ):
        self.lock = threading.RLock()
        self.dataset: Dataset = load_dataset(dataset_path)
        self.dataset_id = dataset_content_hash(
            [d.doc_id for d in self.dataset.documents],
            [d.text for d in self.dataset.documents],
        )
        self.scorer = scorer
        self.chunking = chunking
        self.state_dir = Path(state_dir)
        for sub in ("features", "models", "annotations", "experiments"):
            (self.state_dir / sub).mkdir(parents=True, exist_ok=True)

        self.jobs = JobStore()
        self.models: dict[str, ModelRecord] = {}
        self.annotations: dict[str, dict[str, str]] = {}

        self._load_or_init_queries(queries_path)
        self._load_models()

    # -- persistence ------------------------------------------------------

    def _read_json(self, path: Path):
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"corrupt state file {path}: {exc}") from exc

    def _load_or_init_queries(self, queries_path: str | Path) -> None:
        stored = self.state_dir / QUERIES_FILE
        version_file = self.state_dir / VERSION_FILE
        if stored.exists():
            self.queries = parse_queries(self._read_json(stored), where=str(stored))
            self.query_set_version = int(self._read_json(version_file)["version"]) if version_file.exists() else 1
        else:
            from ..core import load_queries

            self.queries = load_queries(queries_path)
            self.query_set_version = 1
            self._persist_queries()

    def _persist_queries(self) -> None:
        (self.state_dir / QUERIES_FILE).write_text(
            json.dumps(queries_to_json(self.queries), indent=2) + "\n", encoding="utf-8"
        )
        (self.state_dir / VERSION_FILE).write_text(
            json.dumps({"version": self.query_set_version}) + "\n", encoding="utf-8"
        )

    def _load_models(self) -> None:
        for path in sorted((self.state_dir / "models").glob("*.json")):
            raw = self._read_json(path)
            record = ModelRecord(
                model=LinearModel.from_json(raw["model"]),
                model_id=raw["model_id"],
                variant=raw["variant"],
                query_set_version=raw["query_set_version"],
                features_path=raw["features_path"],
                parent=raw.get("parent"),
            )
            self.models[record.model_id] = record
        for path in sorted((self.state_dir / "annotations").glob("*.json")):
            self.annotations[path.stem] = self._read_json(path)

    def _persist_model(self, record: ModelRecord) -> None:
        payload = {
            "model_id": record.model_id,
            "variant": record.variant,
            "query_set_version": record.query_set_version,
            "features_path": record.features_path,
            "parent": record.parent,
            "model": record.model.to_json(),
        }
        (self.state_dir / "models" / f"{record.model_id}.json").write_text(
            json.dumps(payload, indent=2) + "\n", encoding="utf-8"
        )

    def _persist_annotations(self, model_id: str) -> None:
        (self.state_dir / "annotations" / f"{model_id}.json").write_text(
            json.dumps(self.annotations.get(model_id, {}), indent=2) + "\n",
            encoding="utf-8",
        )

    # -- queries ----------------------------------------------------------

    def bump_queries(self, queries: QuerySet) -> int:
        with self.lock:
            self.queries = queries
            self.query_set_version += 1
            self._persist_queries()
            return self.query_set_version

    def add_query(self, query: FeatureQuery) -> int:
        with self.lock:
            if query.query_id in self.queries:
                raise DataError(f"query_id {query.query_id!r} already exists")
            return self.bump_queries(
                QuerySet(self.queries.name, self.queries.queries + (query,))
            )

    def update_query(self, query_id: str, query: FeatureQuery) -> int:
        with self.lock:
            if query_id not in self.queries:
                raise DataError(f"unknown query_id {query_id!r}")
            replaced = tuple(
                query if q.query_id == query_id else q for q in self.queries.queries
            )
            return self.bump_queries(QuerySet(self.queries.name, replaced))

    def delete_query(self, query_id: str) -> int:
        with self.lock:
            if query_id not in self.queries:
                raise DataError(f"unknown query_id {query_id!r}")
            kept = tuple(q for q in self.queries.queries if q.query_id != query_id)
            if not kept:
                raise DataError("cannot delete the last query")
            return self.bump_queries(QuerySet(self.queries.name, kept))

    # -- extraction -------------------------------------------------------

    def active_queries(self, include_custom: bool = True) -> QuerySet:
        return self.queries if include_custom else self.queries.without_custom()

    def extract_address(self, include_custom: bool, doc_ids: list[str] | None) -> str:
        queries = self.active_queries(include_custom)
        parts = [
            self.dataset_id,
            queries_content_hash(queries.queries),
            self.scorer.identity,
            json.dumps(self.chunking.to_json(), sort_keys=True),
            ",".join(doc_ids) if doc_ids else "*",
        ]
        return hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()[:16]

    def features_path_for(self, address: str) -> Path:
        return self.state_dir / "features" / f"{address}.csv"

    def extract_job(self, include_custom: bool = True, doc_ids: list[str] | None = None) -> Job:
        address = self.extract_address(include_custom, doc_ids)
        queries = self.active_queries(include_custom)
        path = self.features_path_for(address)

        def work(job: Job) -> dict:
            def progress(done: int, total: int) -> None:
                job.completed, job.total = done, total

            matrix = extract_matrix(
                self.dataset, queries, self.scorer, self.chunking,
                cache=path, progress=progress, doc_ids=doc_ids,
            )
            n_docs, n_queries = matrix.values.shape
            job.completed = job.total = n_docs * n_queries
            return {
                "features_path": str(path),
                "n_documents": n_docs,
                "n_queries": n_queries,
                "content_address": address,
            }

        return self.jobs.submit("extract", f"extract:{address}", work)

    def ensure_features(self, include_custom: bool = True) -> tuple[str, FeatureMatrix]:
        """Synchronous extraction (cache-backed) for train/explain paths."""
        address = self.extract_address(include_custom, None)
        path = self.features_path_for(address)
        matrix = extract_matrix(
            self.dataset, self.active_queries(include_custom), self.scorer,
            self.chunking, cache=path,
        )
        return str(path), matrix

    # -- models -----------------------------------------------------------

    def train_model(self, task: str, variant: str, include_custom: bool,
                    config: dict | None) -> tuple[ModelRecord, Job]:
        labels = {label for t in self.dataset.tasks for label in t.labels}
        if task not in labels:
            raise DataError(f"unknown label {task!r}; known: {sorted(labels)}")
        cfg = TrainConfig.from_json(config or {})
        version = self.query_set_version
        address = f"train:{self.extract_address(include_custom, None)}:{task}:{variant}:" + json.dumps(
            cfg.to_json(), sort_keys=True
        )

        def work(job: Job) -> dict:
            features_path, matrix = self.ensure_features(include_custom)
            if variant == "binary":
                matrix = FeatureMatrix(
                    matrix.doc_ids, matrix.query_ids, matrix.binarized(), dict(matrix.provenance)
                )
            docs = [d for d in self.dataset.split_docs("train") if task in d.labels]
            if not docs:
                raise DataError(f"no train documents are labeled for {task!r}")
            rows = matrix.select_docs([d.doc_id for d in docs])
            y = np.array([d.labels[task] for d in docs], dtype=float)
            job.total = 1
            model = train(rows, y, cfg, task=task)
            model_id = hashlib.sha256(
                f"{task}|{version}|{variant}|{model.train_fingerprint}".encode()
            ).hexdigest()[:12]
            record = ModelRecord(
                model=model, model_id=model_id, variant=variant,
                query_set_version=version, features_path=features_path,
            )
            with self.lock:
                self.models[model_id] = record
                self._persist_model(record)
            job.completed = 1
            return {"model_id": model_id, "task": task, "variant": variant}

        job = self.jobs.run_inline("train", address, work)
        if job.status == "failed":
            raise QueryfeatError(job.error or "training failed")
        model_id = job.result["model_id"]
        return self.models[model_id], job

    def get_model(self, model_id: str) -> ModelRecord:
        record = self.models.get(model_id)
        if record is None:
            raise DataError(f"unknown model_id {model_id!r}")
        return record

    def register_pruned(self, parent: ModelRecord, model: LinearModel,
                        variant_suffix: str) -> ModelRecord:
        model_id = hashlib.sha256(
            f"{model.task}|{parent.query_set_version}|{model.train_fingerprint}".encode()
        ).hexdigest()[:12]
        record = ModelRecord(
            model=model,
            model_id=model_id,
            variant=f"{parent.variant}{variant_suffix}",
            query_set_version=parent.query_set_version,
            features_path=parent.features_path,
            parent=parent.model_id,
        )
        with self.lock:
            self.models[model_id] = record
            self._persist_model(record)
        return record

    # -- annotations ------------------------------------------------------

    def set_annotations(self, model_id: str, updates: dict[str, str | None]) -> dict[str, str]:
        record = self.get_model(model_id)
        valid = set(record.model.query_ids)
        with self.lock:
            current = dict(self.annotations.get(model_id, {}))
            for qid, value in updates.items():
                if qid not in valid:
                    raise DataError(f"model has no feature {qid!r}")
                if value is None:
                    current.pop(qid, None)
                elif value in ("supports", "not-relevant"):
                    current[qid] = value
                else:
                    raise DataError(f"annotation must be supports/not-relevant, got {value!r}")
            self.annotations[model_id] = current
            self._persist_annotations(model_id)
            return current

    def effective_relevance(self, record: ModelRecord) -> dict[str, str | None]:
        """Per-query relevance: expert annotation, else the a-priori badge."""
        stored = self.annotations.get(record.model_id, {})
        out: dict[str, str | None] = {}
        for qid in record.model.query_ids:
            if qid in stored:
                out[qid] = stored[qid]
            else:
                try:
                    query = self.queries[qid]
                    out[qid] = query.expected_support.get(record.model.task)
                except KeyError:
                    out[qid] = None
        return out
