"""End-to-end studies over one dataset + query set: extraction fidelity,
the downstream comparison grid, learning curves, and feature ablation.

Every study is a pure function of its config (seeds included), so report
files are byte-identical across runs. Feature extraction happens once per
scorer identity and is reused through the on-disk cache; no study re-scores
cells whose provenance already matches.

Output layout under the configured directory:
    features.csv(+.provenance.json)   extraction cache
    fidelity.json                     per-query extraction quality
    grid.json                         downstream comparison grid + deltas
    curves/<variant>.json             learning curves
    ablation/<mode>.json              feature-pruning curves
    manifest.json                     config, seeds, provenance hashes
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .baselines import fit_tfidf, tfidf_matrix
from .core import Dataset, QuerySet, TaskSpec, load_dataset, load_queries
from .errors import DataError, IllDefinedMetricError, QueryfeatError
from .extract import ChunkingConfig, FeatureMatrix, extract_matrix
from .linear import LinearModel, TrainConfig, predict_proba, prune, train
from .metrics import (
    MetricReport,
    auroc,
    bootstrap_ci,
    classification_metrics,
    macro_average,
    make_report,
)
from .scorer import HttpScorer, MockLexicon, MockScorer, NoisyScorer, Scorer

DEFAULT_FRACTIONS = (0.01, 0.02, 0.05, 0.1, 0.25, 0.5, 1.0)
INFERRED_VARIANTS = (
    "inferred-binary",
    "inferred-binary-custom",
    "inferred-continuous",
    "inferred-continuous-custom",
)

GRID_FILE = "grid.json"
FIDELITY_FILE = "fidelity.json"
MANIFEST_FILE = "manifest.json"
FEATURES_CACHE = "features.csv"
DOWNSTREAM_CACHE = "features-downstream.csv"


def build_scorer(spec: str, noise_sigma: float = 0.0, noise_seed: int = 0) -> Scorer:
    """Resolve a scorer selection string: ``mock:<lexicon.json>`` or ``http:<url>``."""
    if spec.startswith(("http://", "https://")):
        scorer: Scorer = _http_scorer_with_env(spec)
    else:
        kind, _, arg = spec.partition(":")
        if kind == "mock":
            if not arg:
                raise DataError("mock scorer needs a lexicon path: mock:<lexicon.json>")
            scorer = MockScorer(MockLexicon.load(arg))
        elif kind == "http":
            if not arg:
                raise DataError("http scorer needs an endpoint: http:<url>")
            scorer = HttpScorer.from_env() if arg == "env" else _http_scorer_with_env(arg)
        else:
            raise DataError(
                f"unknown scorer selection {spec!r}; use mock:<path> or http:<url>"
            )
    if noise_sigma > 0:
        scorer = NoisyScorer(scorer, sigma=noise_sigma, seed=noise_seed)
    return scorer


def _http_scorer_with_env(endpoint: str) -> HttpScorer:
    """Explicit endpoint, but token/in-flight bound still honor the env vars."""
    import os

    from .scorer import DEFAULT_MAX_INFLIGHT, ENV_MAX_INFLIGHT, ENV_TOKEN

    return HttpScorer(
        endpoint,
        token=os.environ.get(ENV_TOKEN),
        max_inflight=int(os.environ.get(ENV_MAX_INFLIGHT, DEFAULT_MAX_INFLIGHT)),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    queries: str
    scorer: str
    out_dir: str
    downstream_queries: str | None = None
    chunking: ChunkingConfig = ChunkingConfig()
    train: TrainConfig = TrainConfig()
    variants: tuple[str, ...] = INFERRED_VARIANTS
    tfidf_sizes: tuple[int, ...] = (30, 100, 1000, 30000)
    include_ground_truth: bool = True
    include_zero_shot: bool = True
    bootstrap_resamples: int = 1000
    seed: int = 0
    noise_sigma: float = 0.0
    tasks: tuple[str, ...] = ()

    def __post_init__(self):
        unknown = [v for v in self.variants if v not in INFERRED_VARIANTS]
        if unknown:
            raise DataError(
                f"unknown variants {unknown}; choose from {list(INFERRED_VARIANTS)}"
            )
        if not self.variants:
            raise DataError("at least one variant is required")

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset,
            "queries": self.queries,
            "scorer": self.scorer,
            "out_dir": self.out_dir,
            "downstream_queries": self.downstream_queries,
            "chunking": self.chunking.to_json(),
            "train": self.train.to_json(),
            "variants": list(self.variants),
            "tfidf_sizes": list(self.tfidf_sizes),
            "include_ground_truth": self.include_ground_truth,
            "include_zero_shot": self.include_zero_shot,
            "bootstrap_resamples": self.bootstrap_resamples,
            "seed": self.seed,
            "noise_sigma": self.noise_sigma,
            "tasks": list(self.tasks),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        raw.pop("out_dir_resolved", None)
        if "chunking" in raw and isinstance(raw["chunking"], dict):
            raw["chunking"] = ChunkingConfig(**raw["chunking"])
        if "train" in raw and isinstance(raw["train"], dict):
            raw["train"] = TrainConfig.from_json(raw["train"])
        for key in ("variants", "tfidf_sizes", "tasks"):
            if key in raw and raw[key] is not None:
                raw[key] = tuple(raw[key])
        return cls(**raw)


def stable_seed(*parts) -> int:
    """Deterministic 63-bit seed from heterogeneous parts (run-independent)."""
    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big") >> 1


def canonical_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


class ExperimentContext:
    """Loaded inputs plus lazily-extracted, cached feature matrices.

    A prebuilt scorer may be injected (the service reuses its live backend);
    otherwise one is built from the config's scorer selection string.
    """

    def __init__(self, cfg: ExperimentConfig, scorer: Scorer | None = None):
        self.cfg = cfg
        self.dataset: Dataset = load_dataset(cfg.dataset)
        self.queries: QuerySet = load_queries(cfg.queries)
        self.scorer = scorer if scorer is not None else build_scorer(
            cfg.scorer, cfg.noise_sigma, cfg.seed
        )
        self.out_dir = Path(cfg.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.downstream: QuerySet | None = None
        if cfg.downstream_queries:
            self.downstream = load_queries(cfg.downstream_queries)
        self._matrix: FeatureMatrix | None = None
        self._downstream_matrix: FeatureMatrix | None = None
        self._tfidf: dict[int, tuple[FeatureMatrix, FeatureMatrix]] = {}

    @property
    def tasks(self) -> list[TaskSpec]:
        if self.cfg.tasks:
            return [self.dataset.task(name) for name in self.cfg.tasks]
        return list(self.dataset.tasks)

    def matrix(self) -> FeatureMatrix:
        if self._matrix is None:
            self._matrix = extract_matrix(
                self.dataset,
                self.queries,
                self.scorer,
                self.cfg.chunking,
                cache=self.out_dir / FEATURES_CACHE,
            )
        return self._matrix

    def downstream_matrix(self) -> FeatureMatrix:
        if self.downstream is None:
            raise DataError("no downstream query file configured")
        if self._downstream_matrix is None:
            self._downstream_matrix = extract_matrix(
                self.dataset,
                self.downstream,
                self.scorer,
                self.cfg.chunking,
                cache=self.out_dir / DOWNSTREAM_CACHE,
            )
        return self._downstream_matrix

    def split_docs(self, split: str):
        return self.dataset.split_docs(split)

    def labeled(self, label: str, split: str) -> tuple[list[str], np.ndarray]:
        docs = [d for d in self.split_docs(split) if label in d.labels]
        return [d.doc_id for d in docs], np.array([d.labels[label] for d in docs], dtype=float)

    def reference_matrix(self) -> FeatureMatrix:
        """Ground-truth indicators packaged as a feature matrix."""
        qids = self.queries.query_ids
        rows, ids = [], []
        for doc in self.dataset.documents:
            if all(q in doc.reference_features for q in qids):
                ids.append(doc.doc_id)
                rows.append([float(doc.reference_features[q]) for q in qids])
        if not rows:
            raise DataError("no documents carry reference features for every query")
        return FeatureMatrix(
            ids, qids, np.array(rows), {"scorer": "reference-indicators"}
        )

    def tfidf_matrices(self, size: int) -> tuple[FeatureMatrix, FeatureMatrix]:
        if size not in self._tfidf:
            vocab = fit_tfidf(self.split_docs("train"), size)
            self._tfidf[size] = (
                tfidf_matrix(self.split_docs("train"), vocab),
                tfidf_matrix(self.split_docs("test"), vocab),
            )
        return self._tfidf[size]


def _variant_values(ctx: ExperimentContext, variant: str) -> FeatureMatrix:
    """Feature matrix (all documents) for an inferred or reference variant."""
    if variant == "ground-truth":
        return ctx.reference_matrix()
    if variant not in INFERRED_VARIANTS:
        raise DataError(f"unknown variant {variant!r}")
    matrix = ctx.matrix()
    if not variant.endswith("-custom"):
        matrix = matrix.select_queries(ctx.queries.without_custom().query_ids)
    if variant.startswith("inferred-binary"):
        matrix = FeatureMatrix(
            matrix.doc_ids, matrix.query_ids, matrix.binarized(), dict(matrix.provenance)
        )
    return matrix


def train_label_model(
    ctx: ExperimentContext,
    features: FeatureMatrix,
    label: str,
    doc_ids: Sequence[str] | None = None,
) -> LinearModel:
    ids, y = ctx.labeled(label, "train")
    if doc_ids is not None:
        subset = set(doc_ids)
        pairs = [(d, yy) for d, yy in zip(ids, y) if d in subset]
        ids, y = [d for d, _ in pairs], np.array([yy for _, yy in pairs])
    rows = features.select_docs(ids)
    return train(rows, y, ctx.cfg.train, task=label)


def _label_scores(
    ctx: ExperimentContext, variant: str, label: str, features: FeatureMatrix | None
) -> tuple[np.ndarray, np.ndarray]:
    """Test-split ranking scores + labels for one (variant, label)."""
    ids, y = ctx.labeled(label, "test")
    if variant == "zero-shot":
        matrix = ctx.downstream_matrix()
        if label not in matrix.query_ids:
            raise DataError(f"downstream queries carry no question for label {label!r}")
        rows = matrix.select_docs(ids)
        scores = rows.values[:, rows.query_ids.index(label)]
        return scores, y.astype(int)
    assert features is not None
    model = train_label_model(ctx, features, label)
    test_rows = features.select_docs(ids)
    return predict_proba(model, test_rows), y.astype(int)


def _task_report(
    ctx: ExperimentContext, variant: str, task: TaskSpec, features: FeatureMatrix | None
) -> MetricReport:
    """Per-task AUROC with a bootstrap CI resampling test documents; macro
    over labels (with a shared resampling universe) for group tasks."""
    resamples = ctx.cfg.bootstrap_resamples
    seed = stable_seed(ctx.cfg.seed, "grid", variant, task.name)
    name = f"auroc:{variant}:{task.name}"

    if task.kind == "single-label":
        label = task.labels[0]
        scores, y = _label_scores(ctx, variant, label, features)
        try:
            point = auroc(scores, y)
        except IllDefinedMetricError as exc:
            return MetricReport(metric=name, point_estimate=None, n=len(y), note=str(exc))
        ci = bootstrap_ci(
            lambda idx: auroc(scores[idx], y[idx]),
            n=len(y), resamples=resamples, seed=seed,
        )
        return make_report(name, point, ci=ci, n=len(y))

    # group task: align every label onto the shared test-document universe
    universe = [d.doc_id for d in ctx.split_docs("test")]
    position = {doc_id: i for i, doc_id in enumerate(universe)}
    aligned: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    reports = []
    for label in task.labels:
        scores, y = _label_scores(ctx, variant, label, features)
        ids, _ = ctx.labeled(label, "test")
        mask = np.zeros(len(universe), dtype=bool)
        full_scores = np.zeros(len(universe))
        full_y = np.zeros(len(universe), dtype=int)
        for doc_id, s, yy in zip(ids, scores, y):
            i = position[doc_id]
            mask[i] = True
            full_scores[i] = s
            full_y[i] = yy
        aligned[label] = (mask, full_scores, full_y)
        try:
            reports.append(make_report(label, auroc(scores, y), n=len(y)))
        except IllDefinedMetricError as exc:
            reports.append(make_report(label, None, n=len(y), note=str(exc)))

    macro = macro_average(reports, metric=name)
    if macro.point_estimate is None:
        return macro

    def macro_statistic(idx: np.ndarray) -> float:
        values = []
        for mask, full_scores, full_y in aligned.values():
            sel = idx[mask[idx]]
            if sel.size == 0:
                continue
            try:
                values.append(auroc(full_scores[sel], full_y[sel]))
            except IllDefinedMetricError:
                continue
        if not values:
            raise IllDefinedMetricError("all labels ill-defined in resample")
        return float(np.mean(values))

    ci = bootstrap_ci(macro_statistic, n=len(universe), resamples=resamples, seed=seed)
    return make_report(
        name, macro.point_estimate, ci=ci, n=len(universe),
        per_label=macro.per_label, note=macro.note,
    )


def downstream_grid(ctx: ExperimentContext) -> dict:
    """The comparison grid: inferred variants, reference features, TF-IDF
    sizes, and zero-shot downstream, with binary-minus-continuous deltas."""
    def tfidf_stacked(size: int) -> FeatureMatrix:
        train_m, test_m = ctx.tfidf_matrices(size)
        return FeatureMatrix(
            list(train_m.doc_ids) + list(test_m.doc_ids),
            train_m.query_ids,
            np.vstack([train_m.values, test_m.values]),
            train_m.provenance,
        )

    builders: list[tuple[str, Callable[[], FeatureMatrix | None]]] = [
        (v, lambda v=v: _variant_values(ctx, v)) for v in ctx.cfg.variants
    ]
    if ctx.cfg.include_ground_truth:
        builders.append(("ground-truth", lambda: _variant_values(ctx, "ground-truth")))
    for size in ctx.cfg.tfidf_sizes:
        builders.append((f"tfidf-{size}", lambda size=size: tfidf_stacked(size)))
    if ctx.cfg.include_zero_shot and ctx.downstream is not None:
        builders.append(("zero-shot", lambda: None))

    rows: dict[str, dict[str, dict]] = {}
    for variant, build in builders:
        rows[variant] = {}
        try:
            features = build()
        except QueryfeatError as exc:
            # partial grid: annotate every task row for the broken variant
            for task in ctx.tasks:
                rows[variant][task.name] = MetricReport(
                    metric=f"auroc:{variant}:{task.name}", point_estimate=None,
                    note=f"failed: {exc}",
                ).to_json()
            continue
        for task in ctx.tasks:
            try:
                report = _task_report(ctx, variant, task, features)
            except QueryfeatError as exc:
                report = MetricReport(
                    metric=f"auroc:{variant}:{task.name}", point_estimate=None,
                    note=f"failed: {exc}",
                )
            rows[variant][task.name] = report.to_json()

    deltas: dict[str, dict[str, float | None]] = {}
    for suffix, key in (("-custom", "custom"), ("", "no-custom")):
        binary, continuous = f"inferred-binary{suffix}", f"inferred-continuous{suffix}"
        if binary in rows and continuous in rows:
            deltas[key] = {}
            for task in ctx.tasks:
                b = rows[binary][task.name].get("point_estimate")
                c = rows[continuous][task.name].get("point_estimate")
                deltas[key][task.name] = None if b is None or c is None else b - c

    payload = {
        "tasks": [t.name for t in ctx.tasks],
        "variants": rows,
        "binary_minus_continuous": deltas,
    }
    (ctx.out_dir / GRID_FILE).write_text(canonical_json(payload), encoding="utf-8")
    _write_manifest(ctx, GRID_FILE)
    return payload


def extraction_fidelity(
    features: FeatureMatrix, dataset: Dataset, split: str = "test"
) -> list[dict]:
    """Per-query extraction quality against reference indicators.

    Continuous values are scored by AUROC (queries without both classes in
    the references are omitted, reported with auroc null); binarized values
    by P/R/F1 with the degenerate cases pinned to zero.
    """
    docs = [d for d in dataset.split_docs(split) if d.reference_features]
    if not docs:
        raise DataError(f"no {split} documents carry reference features")
    rows = []
    for qid in features.query_ids:
        scored = [d for d in docs if qid in d.reference_features]
        if not scored:
            continue
        reference = np.array([d.reference_features[qid] for d in scored], dtype=int)
        values = np.array([features.value(d.doc_id, qid) for d in scored])
        preds = (values > 0.5).astype(int)
        prf = classification_metrics(preds, reference)
        try:
            roc = auroc(values, reference)
        except IllDefinedMetricError:
            roc = None
        rows.append(
            {
                "query_id": qid,
                "n": len(scored),
                "n_reference_positive": int(reference.sum()),
                "auroc": roc,
                "precision": prf.precision,
                "recall": prf.recall,
                "f1": prf.f1,
            }
        )
    if not rows:
        raise DataError("reference features never overlap the evaluated queries")
    return rows


def run_fidelity(ctx: ExperimentContext, split: str = "test") -> list[dict]:
    rows = extraction_fidelity(ctx.matrix(), ctx.dataset, split)
    (ctx.out_dir / FIDELITY_FILE).write_text(canonical_json(rows), encoding="utf-8")
    _write_manifest(ctx, FIDELITY_FILE)
    return rows


def _stratified_subsample(
    y: np.ndarray, fraction: float, seed: int
) -> np.ndarray | None:
    """Index subset with round(fraction * n) per class, dataset order preserved.
    Returns None when either class would be empty (point is skipped)."""
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    n_pos = round(fraction * len(pos))
    n_neg = round(fraction * len(neg))
    if n_pos == 0 or n_neg == 0:
        return None
    rng = np.random.default_rng(seed)
    take_pos = pos if n_pos >= len(pos) else np.sort(rng.choice(pos, n_pos, replace=False))
    take_neg = neg if n_neg >= len(neg) else np.sort(rng.choice(neg, n_neg, replace=False))
    return np.sort(np.concatenate([take_pos, take_neg]))


def learning_curve(
    ctx: ExperimentContext,
    variant: str,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
) -> dict:
    """Retrain on stratified train-split fractions, evaluate on the full test
    split. Features are extracted once and reused across points."""
    fractions = sorted(set(float(f) for f in fractions))
    if any(not 0 < f <= 1 for f in fractions):
        raise DataError("fractions must lie in (0, 1]")
    features = _variant_values(ctx, variant)
    tasks_payload: dict[str, dict] = {}
    for task in ctx.tasks:
        points = []
        for fraction in fractions:
            label_reports = []
            n_train_total = 0
            skipped = []
            for label in task.labels:
                ids, y = ctx.labeled(label, "train")
                subset = _stratified_subsample(
                    y, fraction, stable_seed(ctx.cfg.seed, "curve", variant, label, fraction)
                )
                if subset is None:
                    skipped.append(label)
                    continue
                chosen = [ids[i] for i in subset]
                n_train_total += len(chosen)
                model = train_label_model(ctx, features, label, doc_ids=chosen)
                test_ids, y_test = ctx.labeled(label, "test")
                scores = predict_proba(model, features.select_docs(test_ids))
                try:
                    label_reports.append(make_report(label, auroc(scores, y_test.astype(int)), n=len(y_test)))
                except IllDefinedMetricError as exc:
                    label_reports.append(make_report(label, None, note=str(exc)))
            if not label_reports:
                points.append(
                    {"x": fraction, "y": None, "n_train": 0,
                     "note": f"skipped: single-class at this fraction for {skipped}"}
                )
                continue
            macro = macro_average(label_reports, metric=f"auroc:{variant}:{task.name}")
            point = {
                "x": fraction,
                "y": macro.point_estimate,
                "n_train": n_train_total,
            }
            if skipped:
                point["note"] = f"labels skipped (single-class): {skipped}"
            points.append(point)
        tasks_payload[task.name] = {"points": points}
    payload = {"variant": variant, "fractions": fractions, "tasks": tasks_payload}
    curve_dir = ctx.out_dir / "curves"
    curve_dir.mkdir(exist_ok=True)
    (curve_dir / f"{variant}.json").write_text(canonical_json(payload), encoding="utf-8")
    _write_manifest(ctx, f"curves/{variant}.json")
    return payload


def feature_ablation(
    ctx: ExperimentContext,
    mode: str,
    repeats: int = 10,
    variant: str = "inferred-continuous-custom",
) -> dict:
    """Post-hoc pruning curves: AUROC vs number of features kept.

    magnitude: drop smallest mean |weight| (across the task's labels) first.
    random: average over ``repeats`` seeded keep-orders; the spread across
    repeats is reported as an empirical 2.5/97.5 band.
    """
    if mode not in ("random", "magnitude"):
        raise DataError(f"unknown ablation mode {mode!r}")
    features = _variant_values(ctx, variant)
    qids = list(features.query_ids)
    tasks_payload: dict[str, dict] = {}
    for task in ctx.tasks:
        models: dict[str, LinearModel] = {}
        tests: dict[str, tuple[FeatureMatrix, np.ndarray]] = {}
        for label in task.labels:
            models[label] = train_label_model(ctx, features, label)
            ids, y = ctx.labeled(label, "test")
            tests[label] = (features.select_docs(ids), y.astype(int))

        def curve_for(order: list[str]) -> list[float]:
            values = []
            for kept in range(len(qids) + 1):
                drop = set(order[kept:])
                label_values = []
                for label in task.labels:
                    model = prune(models[label], drop) if drop else models[label]
                    rows, y = tests[label]
                    try:
                        label_values.append(auroc(predict_proba(model, rows), y))
                    except IllDefinedMetricError:
                        continue
                values.append(float(np.mean(label_values)) if label_values else None)
            return values

        if mode == "magnitude":
            mean_abs = np.mean(
                [np.abs(models[label].weights) for label in task.labels], axis=0
            )
            # keep-order: largest mean |weight| first; ties by query id
            order = [q for _, q in sorted(zip(-mean_abs, qids))]
            curve = curve_for(order)
            points = [
                {"x": kept, "y": curve[kept]} for kept in range(len(qids) + 1)
            ]
        else:
            all_curves = []
            for repeat in range(repeats):
                rng = np.random.default_rng(
                    stable_seed(ctx.cfg.seed, "ablation", task.name, repeat)
                )
                order = [qids[i] for i in rng.permutation(len(qids))]
                all_curves.append(curve_for(order))
            stacked = np.array(all_curves, dtype=float)
            points = []
            for kept in range(len(qids) + 1):
                column = stacked[:, kept]
                low, high = np.percentile(column, [2.5, 97.5])
                points.append(
                    {"x": kept, "y": float(column.mean()),
                     "ci_low": float(low), "ci_high": float(high)}
                )
        tasks_payload[task.name] = {"points": points}
    payload = {
        "mode": mode,
        "variant": variant,
        "repeats": repeats if mode == "random" else None,
        "tasks": tasks_payload,
    }
    ablation_dir = ctx.out_dir / "ablation"
    ablation_dir.mkdir(exist_ok=True)
    (ablation_dir / f"{mode}.json").write_text(canonical_json(payload), encoding="utf-8")
    _write_manifest(ctx, f"ablation/{mode}.json")
    return payload


def _write_manifest(ctx: ExperimentContext, *new_outputs: str) -> None:
    path = ctx.out_dir / MANIFEST_FILE
    manifest = {"outputs": []}
    if path.exists():
        manifest = json.loads(path.read_text(encoding="utf-8"))
    outputs = set(manifest.get("outputs", []))
    outputs.update(new_outputs)
    provenance = {}
    if ctx._matrix is not None:
        provenance["features"] = ctx._matrix.provenance
    if ctx._downstream_matrix is not None:
        provenance["downstream_features"] = ctx._downstream_matrix.provenance
    manifest = {
        "version": __version__,
        "config": ctx.cfg.to_json(),
        "outputs": sorted(outputs),
        "provenance": provenance,
    }
    path.write_text(canonical_json(manifest), encoding="utf-8")
