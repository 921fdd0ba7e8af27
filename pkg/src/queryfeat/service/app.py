"""FastAPI application exposing the pipeline to the workbench UI.

Responses are pure views of SessionState: repeating a GET between mutations
returns an identical body. Models carry their query-set version so clients
detect staleness after query edits. Long work (extraction, experiments)
runs as content-addressed jobs polled via /jobs/{id}; training is fast at
desk scale and runs inline.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse

from ..core import FeatureQuery, save_dataset
from ..errors import DataError, QueryfeatError, ScorerError
from ..experiments import (
    DEFAULT_FRACTIONS,
    ExperimentConfig,
    ExperimentContext,
    downstream_grid,
    feature_ablation,
    learning_curve,
)
from ..extract import TEMPLATES, FeatureMatrix
from ..linear import explain, prune
from ..metrics import ranking_alignment
from . import schemas
from .state import ModelRecord, SessionState


def create_app(state: SessionState, token: str | None = None) -> FastAPI:
    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        state.jobs.shutdown()  # drain workers so caches finish flushing

    app = FastAPI(title="queryfeat workbench", version="0.1.0", lifespan=lifespan)
    app.state.session = state

    async def check_token(request: Request) -> None:
        if token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    guard = Depends(check_token)

    @app.exception_handler(DataError)
    async def data_error_handler(request, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(ScorerError)
    async def scorer_error_handler(request, exc):
        return JSONResponse(status_code=502, content={"detail": str(exc)})

    # -- session ----------------------------------------------------------

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse()

    @app.get("/session", response_model=schemas.SessionInfo, dependencies=[guard])
    def session_info():
        docs = state.dataset.documents
        return schemas.SessionInfo(
            dataset_id=state.dataset_id,
            n_documents=len(docs),
            n_train=sum(1 for d in docs if d.split == "train"),
            n_test=sum(1 for d in docs if d.split == "test"),
            query_set_version=state.query_set_version,
            tasks=[
                schemas.TaskInfo(name=t.name, kind=t.kind, labels=list(t.labels))
                for t in state.dataset.tasks
            ],
            scorer_identity=state.scorer.identity,
        )

    # -- queries ----------------------------------------------------------

    def query_model(q: FeatureQuery) -> schemas.QueryModel:
        return schemas.QueryModel(
            query_id=q.query_id,
            question=q.question,
            template_id=q.template_id,
            custom=q.custom,
            expected_support=q.expected_support,
        )

    @app.get("/queries", response_model=schemas.QuerySetResponse, dependencies=[guard])
    def list_queries():
        return schemas.QuerySetResponse(
            name=state.queries.name,
            version=state.query_set_version,
            queries=[query_model(q) for q in state.queries.queries],
        )

    @app.post("/queries", response_model=schemas.QuerySetResponse, status_code=201,
              dependencies=[guard])
    def add_query(query: schemas.QueryModel):
        _validate_template(query.template_id)
        state.add_query(
            FeatureQuery(
                query_id=query.query_id,
                question=query.question,
                template_id=query.template_id,
                custom=query.custom,
                expected_support=dict(query.expected_support),
            )
        )
        return list_queries()

    @app.put("/queries/{query_id}", response_model=schemas.QuerySetResponse,
             dependencies=[guard])
    def update_query(query_id: str, update: schemas.QueryUpdate):
        _validate_template(update.template_id)
        state.update_query(
            query_id,
            FeatureQuery(
                query_id=query_id,
                question=update.question,
                template_id=update.template_id,
                custom=update.custom,
                expected_support=dict(update.expected_support),
            ),
        )
        return list_queries()

    @app.delete("/queries/{query_id}", response_model=schemas.QuerySetResponse,
                dependencies=[guard])
    def delete_query(query_id: str):
        state.delete_query(query_id)
        return list_queries()

    def _validate_template(template_id: str) -> None:
        if template_id not in TEMPLATES:
            raise DataError(f"unknown template_id {template_id!r}; known: {sorted(TEMPLATES)}")

    # -- documents --------------------------------------------------------

    @app.get("/documents", response_model=list[schemas.DocumentSummary],
             dependencies=[guard])
    def list_documents(split: str | None = None,
                       limit: int = Query(default=50, ge=1, le=1000),
                       offset: int = Query(default=0, ge=0)):
        docs = state.dataset.documents
        if split is not None:
            docs = tuple(d for d in docs if d.split == split)
        return [
            schemas.DocumentSummary(doc_id=d.doc_id, split=d.split, labels=d.labels)
            for d in docs[offset : offset + limit]
        ]

    @app.get("/documents/{doc_id}", response_model=schemas.DocumentDetail,
             dependencies=[guard])
    def get_document(doc_id: str):
        doc = state.dataset.document(doc_id)
        return schemas.DocumentDetail(
            doc_id=doc.doc_id, split=doc.split, labels=doc.labels,
            text=doc.text, reference_features=doc.reference_features,
        )

    # -- jobs / extraction --------------------------------------------------

    @app.post("/extract", response_model=schemas.JobResponse, status_code=202,
              dependencies=[guard])
    def start_extract(request: schemas.ExtractRequest):
        job = state.extract_job(
            include_custom=request.include_custom, doc_ids=request.doc_ids
        )
        return schemas.JobResponse(**job.to_response())

    @app.get("/jobs/{job_id}", response_model=schemas.JobResponse, dependencies=[guard])
    def get_job(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job_id {job_id!r}")
        return schemas.JobResponse(**job.to_response())

    MAX_INLINE_CELLS = 10_000

    @app.get("/jobs/{job_id}/result", dependencies=[guard])
    def get_job_result(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job_id {job_id!r}")
        if job.status != "done" or not job.result:
            raise HTTPException(status_code=409, detail=f"job is {job.status}")
        path = job.result.get("report_path") or job.result.get("features_path")
        if not path or not Path(path).exists():
            return job.result
        if path.endswith(".json"):
            return json.loads(Path(path).read_text(encoding="utf-8"))
        if job.kind == "extract":
            matrix = FeatureMatrix.load(path)
            if matrix.values.size <= MAX_INLINE_CELLS:  # preview-sized results
                return {
                    **job.result,
                    "doc_ids": list(matrix.doc_ids),
                    "query_ids": list(matrix.query_ids),
                    "values": [[float(v) for v in row] for row in matrix.values],
                }
        return job.result

    # -- models -----------------------------------------------------------

    @app.post("/train", response_model=schemas.ModelSummary, status_code=201,
              dependencies=[guard])
    def train_endpoint(request: schemas.TrainRequest):
        try:
            record, _ = state.train_model(
                request.task, request.variant, request.include_custom, request.config
            )
        except QueryfeatError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return schemas.ModelSummary(**record.summary(state.query_set_version))

    @app.get("/models", response_model=list[schemas.ModelSummary], dependencies=[guard])
    def list_models():
        return [
            schemas.ModelSummary(**record.summary(state.query_set_version))
            for record in sorted(state.models.values(), key=lambda r: r.model_id)
        ]

    @app.get("/models/{model_id}", response_model=schemas.ModelDetail, dependencies=[guard])
    def get_model(model_id: str):
        record = state.get_model(model_id)
        return schemas.ModelDetail(
            **record.summary(state.query_set_version),
            query_ids=list(record.model.query_ids),
            weights=[float(w) for w in record.model.weights],
            intercept=record.model.intercept,
            config=record.model.config.to_json(),
        )

    def _coefficients(record: ModelRecord) -> list[schemas.CoefficientEntry]:
        relevance = state.effective_relevance(record)
        stored = state.annotations.get(record.model_id, {})
        coefficients = record.model.coefficients()
        ranked = sorted(coefficients, key=lambda q: (-coefficients[q], q))
        entries = []
        for rank, qid in enumerate(ranked, start=1):
            weight = coefficients[qid]
            try:
                question = state.queries[qid].question
                badge = state.queries[qid].expected_support.get(record.model.task)
            except KeyError:
                question, badge = "(query no longer in the active set)", None
            effective = relevance[qid]
            if effective == "supports":
                alignment = "aligned" if weight > 0 else "misaligned"
            elif effective == "not-relevant":
                alignment = "aligned" if weight <= 0 else "misaligned"
            else:
                alignment = "unannotated"
            entries.append(
                schemas.CoefficientEntry(
                    query_id=qid, question=question, weight=weight, rank=rank,
                    expected_support=badge, annotation=stored.get(qid),
                    alignment=alignment,
                )
            )
        return entries

    @app.get("/models/{model_id}/coefficients",
             response_model=schemas.CoefficientsResponse, dependencies=[guard])
    def get_coefficients(model_id: str):
        record = state.get_model(model_id)
        return schemas.CoefficientsResponse(
            model_id=model_id,
            task=record.model.task,
            stale=record.query_set_version != state.query_set_version,
            intercept=record.model.intercept,
            coefficients=_coefficients(record),
        )

    @app.get("/models/{model_id}/metrics", response_model=schemas.ModelMetrics,
             dependencies=[guard])
    def get_model_metrics(model_id: str, split: str = "test"):
        record = state.get_model(model_id)
        task = record.model.task
        docs = [d for d in state.dataset.split_docs(split) if task in d.labels]
        if not docs:
            raise DataError(f"no {split} documents are labeled for {task!r}")
        matrix = FeatureMatrix.load(record.features_path)
        if record.variant.startswith("binary"):
            matrix = FeatureMatrix(
                matrix.doc_ids, matrix.query_ids, matrix.binarized(), dict(matrix.provenance)
            )
        rows = matrix.select_docs([d.doc_id for d in docs])
        labels = [d.labels[task] for d in docs]
        from ..errors import IllDefinedMetricError
        from ..linear import predict_proba
        from ..metrics import auroc

        try:
            value = auroc(predict_proba(record.model, rows), labels)
            note = ""
        except IllDefinedMetricError as exc:
            value, note = None, str(exc)
        return schemas.ModelMetrics(
            model_id=model_id, split=split, auroc=value, n=len(docs), note=note
        )

    @app.get("/models/{model_id}/annotations",
             response_model=schemas.AnnotationsResponse, dependencies=[guard])
    def get_annotations(model_id: str):
        state.get_model(model_id)
        return schemas.AnnotationsResponse(
            model_id=model_id, annotations=state.annotations.get(model_id, {})
        )

    @app.put("/models/{model_id}/annotations",
             response_model=schemas.AnnotationsResponse, dependencies=[guard])
    def put_annotations(model_id: str, update: schemas.AnnotationsUpdate):
        merged = state.set_annotations(model_id, update.annotations)
        return schemas.AnnotationsResponse(model_id=model_id, annotations=merged)

    @app.get("/models/{model_id}/ranking", response_model=schemas.RankingResponse,
             dependencies=[guard])
    def get_ranking(model_id: str):
        record = state.get_model(model_id)
        relevance = state.effective_relevance(record)
        relevant = {qid for qid, value in relevance.items() if value == "supports"}
        result = ranking_alignment(record.model.coefficients(), relevant)
        return schemas.RankingResponse(
            model_id=model_id,
            relevant=sorted(relevant),
            precision_at={str(k): v for k, v in result.precision_at.items()},
            auc=result.auc,
        )

    @app.post("/models/{model_id}/explain", response_model=schemas.ExplanationResponse,
              dependencies=[guard])
    def explain_endpoint(model_id: str, request: schemas.ExplainRequest):
        record = state.get_model(model_id)
        doc = state.dataset.document(request.doc_id)
        matrix = FeatureMatrix.load(record.features_path)
        row = {qid: matrix.value(doc.doc_id, qid) for qid in record.model.query_ids}
        result = explain(record.model, row)
        items = []
        for qid, value, score in result.items:
            try:
                question = state.queries[qid].question
            except KeyError:
                question = "(query no longer in the active set)"
            items.append(
                schemas.ExplanationItem(
                    query_id=qid, question=question, feature_value=value, score=score
                )
            )
        return schemas.ExplanationResponse(
            model_id=model_id,
            doc_id=doc.doc_id,
            items=items,
            intercept=result.intercept,
            predicted_probability=result.predicted_probability,
            predicted_label=int(result.predicted_probability > 0.5),
            reference_label=doc.labels.get(record.model.task),
        )

    @app.post("/models/{model_id}/prune", response_model=schemas.PruneResponse,
              status_code=201, dependencies=[guard])
    def prune_endpoint(model_id: str, request: schemas.PruneRequest):
        record = state.get_model(model_id)
        if request.retrain:
            matrix = FeatureMatrix.load(record.features_path)
            if record.variant.startswith("binary"):
                matrix = FeatureMatrix(
                    matrix.doc_ids, matrix.query_ids, matrix.binarized(), dict(matrix.provenance)
                )
            task = record.model.task
            docs = [d for d in state.dataset.split_docs("train") if task in d.labels]
            rows = matrix.select_docs([d.doc_id for d in docs])
            labels = [d.labels[task] for d in docs]
            new_model = prune(
                record.model, set(request.drop), retrain=True,
                features=rows, labels=labels, cfg=record.model.config,
            )
        else:
            new_model = prune(record.model, set(request.drop))
        suffix = "+retrained" if request.retrain else "+pruned"
        new_record = state.register_pruned(record, new_model, suffix)
        return schemas.PruneResponse(
            model_id=new_record.model_id,
            parent=model_id,
            dropped=sorted(request.drop),
            retrained=request.retrain,
        )

    # -- experiments --------------------------------------------------------

    def state_dataset_path() -> Path:
        path = state.state_dir / "dataset.jsonl"
        if not path.exists():
            save_dataset(state.dataset, path)
        return path

    def _experiment_job(kind: str, request: schemas.ExperimentRequest, runner):
        address = f"experiment:{kind}:" + hashlib.sha256(
            json.dumps(request.model_dump(), sort_keys=True).encode()
            + state.dataset_id.encode()
            + str(state.query_set_version).encode()
        ).hexdigest()[:16]
        out_dir = state.state_dir / "experiments" / address.rsplit(":", 1)[-1]

        def work(job):
            job.total = 1
            cfg = ExperimentConfig(
                dataset=str(state_dataset_path()),
                queries=str(state.state_dir / "queries.json"),
                scorer=getattr(state.scorer, "spec", state.scorer.identity),
                out_dir=str(out_dir),
                tasks=tuple(request.tasks or ()),
                tfidf_sizes=tuple(request.tfidf_sizes or (30, 100, 1000, 30000)),
                bootstrap_resamples=request.bootstrap_resamples,
                seed=request.seed,
                include_zero_shot=False,
                chunking=state.chunking,
            )
            ctx = ExperimentContext(cfg, scorer=state.scorer)
            report = runner(ctx, request)
            job.completed = 1
            return {"report_path": report, "out_dir": str(out_dir)}

        job = state.jobs.submit("experiment", address, work)
        return schemas.JobResponse(**job.to_response())

    @app.post("/experiments/grid", response_model=schemas.JobResponse, status_code=202,
              dependencies=[guard])
    def run_grid(request: schemas.ExperimentRequest):
        def runner(ctx, req):
            downstream_grid(ctx)
            return str(ctx.out_dir / "grid.json")

        return _experiment_job("grid", request, runner)

    @app.post("/experiments/curve", response_model=schemas.JobResponse, status_code=202,
              dependencies=[guard])
    def run_curve(request: schemas.ExperimentRequest):
        def runner(ctx, req):
            fractions = req.fractions or list(DEFAULT_FRACTIONS)
            learning_curve(ctx, req.variant, fractions)
            return str(ctx.out_dir / "curves" / f"{req.variant}.json")

        return _experiment_job("curve", request, runner)

    @app.post("/experiments/ablation", response_model=schemas.JobResponse,
              status_code=202, dependencies=[guard])
    def run_ablation(request: schemas.ExperimentRequest):
        def runner(ctx, req):
            feature_ablation(ctx, req.mode, repeats=req.repeats, variant=req.variant)
            return str(ctx.out_dir / "ablation" / f"{req.mode}.json")

        return _experiment_job("ablation", request, runner)

    return app


def run_server(
    dataset_path: str,
    queries_path: str,
    state_dir: str,
    scorer_spec: str,
    host: str = "127.0.0.1",
    port: int = 8000,
    token: str | None = None,
    chunking=None,
    noise_sigma: float = 0.0,
    noise_seed: int = 0,
) -> None:
    """Build state from files and serve until interrupted."""
    import uvicorn

    from ..experiments import build_scorer
    from ..extract import ChunkingConfig

    scorer = build_scorer(scorer_spec, noise_sigma, noise_seed)
    scorer.spec = scorer_spec  # type: ignore[attr-defined]
    state = SessionState(
        dataset_path=dataset_path,
        queries_path=queries_path,
        state_dir=state_dir,
        scorer=scorer,
        chunking=chunking or ChunkingConfig(),
    )
    app = create_app(state, token=token)
    uvicorn.run(app, host=host, port=port, log_level="info")
