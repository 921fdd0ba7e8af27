"""Pydantic request/response models for the workbench HTTP API."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"


class TaskInfo(BaseModel):
    name: str
    kind: str
    labels: list[str]


class SessionInfo(BaseModel):
    dataset_id: str
    n_documents: int
    n_train: int
    n_test: int
    query_set_version: int
    tasks: list[TaskInfo]
    scorer_identity: str


class QueryModel(BaseModel):
    query_id: str
    question: str
    template_id: str = "clinical-note"
    custom: bool = False
    expected_support: dict[str, Literal["supports", "not-relevant"]] = Field(
        default_factory=dict
    )


class QuerySetResponse(BaseModel):
    name: str
    version: int
    queries: list[QueryModel]


class QueryUpdate(BaseModel):
    question: str
    template_id: str = "clinical-note"
    custom: bool = False
    expected_support: dict[str, Literal["supports", "not-relevant"]] = Field(
        default_factory=dict
    )


class DocumentSummary(BaseModel):
    doc_id: str
    split: str
    labels: dict[str, int]


class DocumentDetail(DocumentSummary):
    text: str
    reference_features: dict[str, int]


class ExtractRequest(BaseModel):
    doc_ids: Optional[list[str]] = None
    include_custom: bool = True


class JobProgress(BaseModel):
    completed: int = 0
    total: int = 0


class JobResponse(BaseModel):
    job_id: str
    kind: Literal["extract", "train", "experiment"]
    status: Literal["queued", "running", "done", "failed"]
    progress: JobProgress
    result: Optional[dict] = None
    error: Optional[str] = None


class TrainRequest(BaseModel):
    task: str  # label name (e.g. "readmit" or "finding/edema")
    variant: Literal["binary", "continuous"] = "continuous"
    include_custom: bool = True
    config: Optional[dict] = None  # TrainConfig field overrides


class ModelSummary(BaseModel):
    model_id: str
    task: str
    variant: str
    n_features: int
    query_set_version: int
    stale: bool
    train_fingerprint: str
    parent: Optional[str] = None


class ModelDetail(ModelSummary):
    query_ids: list[str]
    weights: list[float]
    intercept: float
    config: dict


class CoefficientEntry(BaseModel):
    query_id: str
    question: str
    weight: float
    rank: int
    expected_support: Optional[Literal["supports", "not-relevant"]] = None
    annotation: Optional[Literal["supports", "not-relevant"]] = None
    alignment: Literal["aligned", "misaligned", "unannotated"]


class CoefficientsResponse(BaseModel):
    model_id: str
    task: str
    stale: bool
    intercept: float
    coefficients: list[CoefficientEntry]


class AnnotationsUpdate(BaseModel):
    # query_id -> judgement; null clears back to the a-priori badge
    annotations: dict[str, Optional[Literal["supports", "not-relevant"]]]


class AnnotationsResponse(BaseModel):
    model_id: str
    annotations: dict[str, Literal["supports", "not-relevant"]]


class RankingResponse(BaseModel):
    model_id: str
    relevant: list[str]
    precision_at: dict[str, float]
    auc: Optional[float]


class ModelMetrics(BaseModel):
    model_id: str
    split: str
    auroc: Optional[float]
    n: int
    note: str = ""


class ExplainRequest(BaseModel):
    doc_id: str


class ExplanationItem(BaseModel):
    query_id: str
    question: str
    feature_value: float
    score: float


class ExplanationResponse(BaseModel):
    model_id: str
    doc_id: str
    items: list[ExplanationItem]
    intercept: float
    predicted_probability: float
    predicted_label: int
    reference_label: Optional[int] = None


class PruneRequest(BaseModel):
    drop: list[str]
    retrain: bool = False


class PruneResponse(BaseModel):
    model_id: str
    parent: str
    dropped: list[str]
    retrained: bool


class ExperimentRequest(BaseModel):
    tasks: Optional[list[str]] = None
    variant: str = "inferred-continuous-custom"
    fractions: Optional[list[float]] = None  # curve only
    mode: Literal["random", "magnitude"] = "magnitude"  # ablation only
    repeats: int = 10  # ablation only
    tfidf_sizes: Optional[list[int]] = None  # grid only
    bootstrap_resamples: int = 1000
    seed: int = 0


class ErrorResponse(BaseModel):
    detail: str
