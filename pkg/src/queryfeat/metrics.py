"""Evaluation metrics: AUROC, P/R/F1, ranking alignment, coefficient entropy,
bootstrap confidence intervals, macro-averaging.

AUROC is the Mann-Whitney statistic (probability a random positive outranks
a random negative, ties counted half) computed from average ranks in
O(n log n); every intermediate is an exact multiple of 1/2 well below 2^52,
so the result is bit-identical to the O(n^2) pairwise definition.

Degenerate classification cases follow a fixed convention: with no positive
predictions precision is 0, with no positive labels recall is 0, and F1 is
0 whenever P + R = 0. Metrics that are genuinely undefined (single-class
AUROC) raise IllDefinedMetricError instead of guessing.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, IllDefinedMetricError

DEFAULT_PRECISION_KS = (1, 5, 10, 20)


def _as_binary(labels: Sequence[int] | np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise DataError(f"{name} must be one-dimensional")
    if not np.isin(arr, (0, 1)).all():
        raise DataError(f"{name} must contain only 0 and 1")
    return arr.astype(np.int64)


def auroc(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray) -> float:
    """Probability that a random positive outranks a random negative (ties half)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = _as_binary(labels, "labels")
    if scores.shape != labels.shape:
        raise DataError("scores and labels must have equal length")
    if not np.isfinite(scores).all():
        raise DataError("scores must be finite")
    n = scores.size
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise IllDefinedMetricError(
            f"AUROC is ill-defined with {n_pos} positives and {n_neg} negatives"
        )
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    new_group = np.empty(n, dtype=bool)
    new_group[0] = True
    new_group[1:] = sorted_scores[1:] != sorted_scores[:-1]
    group_of = np.cumsum(new_group) - 1
    starts = np.flatnonzero(new_group)
    ends = np.append(starts[1:], n)
    # average of 1-based ranks start+1 .. end; exact multiples of 1/2
    group_rank = (starts + ends - 1) / 2.0 + 1.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = group_rank[group_of]
    rank_sum = float(ranks[labels == 1].sum())
    numerator = rank_sum - n_pos * (n_pos + 1) / 2.0
    return numerator / float(n_pos * n_neg)


@dataclass(frozen=True)
class PrecisionRecallF1:
    precision: float
    recall: float
    f1: float


def classification_metrics(
    preds: Sequence[int] | np.ndarray, labels: Sequence[int] | np.ndarray
) -> PrecisionRecallF1:
    """Standard P/R/F1 with the fixed zero rules for degenerate inputs."""
    preds = _as_binary(preds, "preds")
    labels = _as_binary(labels, "labels")
    if preds.shape != labels.shape:
        raise DataError("preds and labels must have equal length")
    tp = int(((preds == 1) & (labels == 1)).sum())
    pred_pos = int((preds == 1).sum())
    true_pos = int((labels == 1).sum())
    precision = tp / pred_pos if pred_pos else 0.0
    recall = tp / true_pos if true_pos else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PrecisionRecallF1(precision=precision, recall=recall, f1=f1)


@dataclass(frozen=True)
class RankingResult:
    """Alignment of a coefficient ranking with an a-priori relevance set."""

    precision_at: dict[int, float]
    auc: float | None  # None when relevance is single-class
    ranked_query_ids: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "precision_at": {str(k): v for k, v in self.precision_at.items()},
            "auc": self.auc,
            "ranking": list(self.ranked_query_ids),
        }


def ranking_alignment(
    coefficients: Mapping[str, float],
    relevant: Iterable[str],
    ks: Sequence[int] = DEFAULT_PRECISION_KS,
) -> RankingResult:
    """Rank queries by coefficient (descending, ties by query_id) and score
    the ranking against the relevant set with P@k and ROC AUC."""
    relevant = set(relevant)
    unknown = relevant - set(coefficients)
    if unknown:
        raise DataError(f"relevant set names unknown queries: {sorted(unknown)}")
    if not coefficients:
        raise DataError("ranking_alignment needs at least one coefficient")
    ranked = sorted(coefficients, key=lambda q: (-coefficients[q], q))
    precision_at = {
        k: sum(1 for q in ranked[:k] if q in relevant) / k for k in ks
    }
    labels = [1 if q in relevant else 0 for q in ranked]
    scores = [coefficients[q] for q in ranked]
    try:
        auc = auroc(scores, labels)
    except IllDefinedMetricError:
        auc = None
    return RankingResult(precision_at=precision_at, auc=auc, ranked_query_ids=tuple(ranked))


@dataclass(frozen=True)
class RankingReport:
    """Per-label ranking alignment plus an averages row (ill-defined AUCs omitted)."""

    per_label: dict[str, RankingResult]
    average_precision_at: dict[int, float]
    average_auc: float | None

    @classmethod
    def build(cls, per_label: dict[str, RankingResult]) -> "RankingReport":
        if not per_label:
            raise DataError("ranking report needs at least one label")
        ks = list(next(iter(per_label.values())).precision_at)
        avg_p = {
            k: float(np.mean([r.precision_at[k] for r in per_label.values()])) for k in ks
        }
        aucs = [r.auc for r in per_label.values() if r.auc is not None]
        avg_auc = float(np.mean(aucs)) if aucs else None
        return cls(per_label=per_label, average_precision_at=avg_p, average_auc=avg_auc)

    def to_json(self) -> dict:
        return {
            "per_label": {name: r.to_json() for name, r in self.per_label.items()},
            "average": {
                "precision_at": {str(k): v for k, v in self.average_precision_at.items()},
                "auc": self.average_auc,
            },
        }


def coefficient_entropy(weights: Sequence[float] | np.ndarray) -> float:
    """Shannon entropy (nats) of softmax over absolute coefficient values."""
    w = np.abs(np.asarray(weights, dtype=np.float64))
    if w.size == 0:
        raise DataError("coefficient_entropy needs at least one weight")
    if not np.isfinite(w).all():
        raise DataError("weights must be finite")
    z = w - w.max()
    e = np.exp(z)
    p = e / e.sum()
    return float(-(p * np.log(p)).sum() + 0.0)


@dataclass(frozen=True)
class BootstrapInterval:
    low: float
    high: float
    n_valid: int
    n_skipped: int


def bootstrap_ci(
    statistic: Callable[[np.ndarray], float],
    n: int,
    resamples: int = 1000,
    seed: int = 0,
) -> BootstrapInterval:
    """Seeded nonparametric percentile bootstrap over index multisets.

    ``statistic`` receives an integer index array of length n (a with-
    replacement draw from range(n)); draws on which it raises
    IllDefinedMetricError are skipped and counted. More than 50% skipped
    draws is reported as failure.
    """
    if n < 1:
        raise DataError("bootstrap_ci needs at least one sample")
    rng = np.random.default_rng(seed)
    stats: list[float] = []
    skipped = 0
    for _ in range(resamples):
        idx = rng.integers(0, n, size=n)
        try:
            stats.append(float(statistic(idx)))
        except IllDefinedMetricError:
            skipped += 1
    if skipped * 2 > resamples:
        raise IllDefinedMetricError(
            f"bootstrap failed: {skipped}/{resamples} resamples were ill-defined"
        )
    low, high = np.percentile(stats, [2.5, 97.5])
    return BootstrapInterval(low=float(low), high=float(high), n_valid=len(stats), n_skipped=skipped)


@dataclass(frozen=True)
class MetricReport:
    """One reported number, optionally with a 95% CI and a per-label breakdown."""

    metric: str
    point_estimate: float | None
    ci_low: float | None = None
    ci_high: float | None = None
    n: int = 0
    per_label: dict[str, "MetricReport"] = field(default_factory=dict)
    note: str = ""

    def to_json(self) -> dict:
        out: dict[str, object] = {
            "metric": self.metric,
            "point_estimate": self.point_estimate,
            "n": self.n,
        }
        if self.ci_low is not None:
            out["ci_low"] = self.ci_low
            out["ci_high"] = self.ci_high
        if self.per_label:
            out["per_label"] = {k: v.to_json() for k, v in self.per_label.items()}
        if self.note:
            out["note"] = self.note
        return out


def make_report(
    metric: str,
    point_estimate: float | None,
    ci: BootstrapInterval | None = None,
    n: int = 0,
    per_label: dict[str, MetricReport] | None = None,
    note: str = "",
) -> MetricReport:
    """Build a MetricReport; a CI is widened (rarely) to contain the estimate."""
    ci_low = ci_high = None
    if ci is not None and point_estimate is not None:
        ci_low = min(ci.low, point_estimate)
        ci_high = max(ci.high, point_estimate)
    return MetricReport(
        metric=metric,
        point_estimate=point_estimate,
        ci_low=ci_low,
        ci_high=ci_high,
        n=n,
        per_label=per_label or {},
        note=note,
    )


def macro_average(reports: Sequence[MetricReport], metric: str | None = None) -> MetricReport:
    """Unweighted mean over labels; ill-defined labels are excluded but kept
    in the per_label breakdown. n counts the labels that contributed."""
    if not reports:
        raise DataError("macro_average needs at least one label report")
    valid = [r for r in reports if r.point_estimate is not None]
    point = float(np.mean([r.point_estimate for r in valid])) if valid else None
    note = "" if len(valid) == len(reports) else (
        f"{len(reports) - len(valid)} of {len(reports)} labels ill-defined and excluded"
    )
    return MetricReport(
        metric=metric or f"macro({reports[0].metric})",
        point_estimate=point,
        n=len(valid),
        per_label={r.metric: r for r in reports},
        note=note,
    )


def save_reports(reports: Sequence[MetricReport], path: str | Path) -> None:
    """Write reports as a JSON array (the report-file interchange format)."""
    payload = [r.to_json() for r in reports]
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def reports_to_csv(reports: Sequence[MetricReport]) -> str:
    """Flatten reports (one row per report or per-label entry) for plotting."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["metric", "label", "point_estimate", "ci_low", "ci_high", "n", "note"])

    def emit(report: MetricReport, label: str = "") -> None:
        writer.writerow(
            [
                report.metric,
                label,
                "" if report.point_estimate is None else format(report.point_estimate, ".17g"),
                "" if report.ci_low is None else format(report.ci_low, ".17g"),
                "" if report.ci_high is None else format(report.ci_high, ".17g"),
                report.n,
                report.note,
            ]
        )
        for sub_label, sub in report.per_label.items():
            emit(sub, sub_label)

    for report in reports:
        emit(report)
    return buf.getvalue()
