"""Logistic-regression models over feature-matrix columns, trained by SGD.

The objective is the regularized logistic loss

    L(w, b) = (1/M) sum_i log(1 + exp(-y~_i (w.f_i + b))) + lambda ||w||^2

with y~ in {-1, +1} and an unpenalized intercept. Optimization is plain
per-sample SGD with the inverse-scaling step size eta_t = 1/(lambda(t0+t)),
t0 = 1/(eta0 lambda), eta0 = lambda^(-1/4), shuffled epochs, and early
stopping once the epoch's running mean loss has not improved by the
tolerance for 5 consecutive epochs. Everything is deterministic given the
seed. Features are used as-is (no standardization) so coefficients remain
directly interpretable.

Models are keyed by query id: prediction and explanation align columns by
id, never by position.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .extract import FeatureMatrix

CONFIG_VERSION = 1
_PATIENCE = 5  # epochs without tolerance-sized improvement before stopping


@dataclass(frozen=True)
class TrainConfig:
    l2_strength: float = 1e-4
    epochs: int = 1000
    tolerance: float = 1e-3
    learning_rate_schedule: str = "inverse-scaling"
    seed: int = 0
    shuffle_each_epoch: bool = True
    fit_intercept: bool = True

    def __post_init__(self):
        if self.l2_strength < 0:
            raise DataError("l2_strength must be nonnegative")
        if self.epochs < 1:
            raise DataError("epochs must be positive")
        if self.learning_rate_schedule != "inverse-scaling":
            raise DataError(
                f"unknown learning_rate_schedule {self.learning_rate_schedule!r}"
            )

    def to_json(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "l2_strength": self.l2_strength,
            "epochs": self.epochs,
            "tolerance": self.tolerance,
            "learning_rate_schedule": self.learning_rate_schedule,
            "seed": self.seed,
            "shuffle_each_epoch": self.shuffle_each_epoch,
            "fit_intercept": self.fit_intercept,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "TrainConfig":
        raw = {k: v for k, v in raw.items() if k != "version"}
        return cls(**raw)


@dataclass(frozen=True)
class LinearModel:
    query_ids: tuple[str, ...]
    weights: np.ndarray
    intercept: float
    task: str
    train_fingerprint: str
    config: TrainConfig = TrainConfig()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(self.query_ids),):
            raise DataError("weights must align one-to-one with query_ids")
        if not np.isfinite(w).all() or not math.isfinite(self.intercept):
            raise DataError("model parameters must be finite")
        object.__setattr__(self, "weights", w)

    def coefficients(self) -> dict[str, float]:
        return {q: float(w) for q, w in zip(self.query_ids, self.weights)}

    def to_json(self) -> dict:
        return {
            "task": self.task,
            "query_ids": list(self.query_ids),
            "weights": [float(w) for w in self.weights],
            "intercept": self.intercept,
            "train_fingerprint": self.train_fingerprint,
            "config": self.config.to_json(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, raw: dict) -> "LinearModel":
        return cls(
            query_ids=tuple(raw["query_ids"]),
            weights=np.asarray(raw["weights"], dtype=np.float64),
            intercept=float(raw["intercept"]),
            task=raw["task"],
            train_fingerprint=raw["train_fingerprint"],
            config=TrainConfig.from_json(raw.get("config", {})),
        )

    @classmethod
    def load(cls, path: str | Path) -> "LinearModel":
        path = Path(path)
        if not path.exists():
            raise DataError(f"model file not found: {path}")
        return cls.from_json(json.loads(path.read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Explanation:
    """Per-query contribution breakdown for a single document."""

    items: tuple[tuple[str, float, float], ...]  # (query_id, feature_value, score)
    intercept: float
    predicted_probability: float

    def to_json(self) -> dict:
        return {
            "items": [
                {"query_id": q, "feature_value": v, "score": s} for q, v, s in self.items
            ],
            "intercept": self.intercept,
            "predicted_probability": self.predicted_probability,
        }


def _sigmoid_scalar(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _log1pexp(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)), elementwise, without overflow."""
    out = np.empty_like(x)
    small = x <= 0
    out[small] = np.log1p(np.exp(x[small]))
    out[~small] = x[~small] + np.log1p(np.exp(-x[~small]))
    return out


def regularized_loss(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2_strength: float
) -> float:
    """Mean logistic loss plus lambda ||w||^2 (intercept unpenalized)."""
    y_sign = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    margins = y_sign * (X @ w + b)
    return float(np.mean(_log1pexp(-margins)) + l2_strength * float(w @ w))


def loss_gradient(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2_strength: float
) -> tuple[np.ndarray, float]:
    """Analytic gradient of regularized_loss wrt (w, b)."""
    y_sign = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    margins = y_sign * (X @ w + b)
    # d/dz log(1+exp(-z)) = -sigmoid(-z)
    s = 1.0 / (1.0 + np.exp(np.clip(margins, -500, 500)))
    grad_w = -(X.T @ (y_sign * s)) / len(y_sign) + 2.0 * l2_strength * w
    grad_b = float(-(y_sign * s).mean())
    return grad_w, grad_b


def _resolve_features(
    features: FeatureMatrix | np.ndarray, query_ids: Sequence[str] | None
) -> tuple[np.ndarray, tuple[str, ...], dict]:
    if isinstance(features, FeatureMatrix):
        return features.values, features.query_ids, features.provenance
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("feature array must be two-dimensional")
    if query_ids is None:
        raise DataError("query_ids are required when training from a raw array")
    if len(query_ids) != X.shape[1]:
        raise DataError("query_ids must match the number of feature columns")
    return X, tuple(query_ids), {}


def train(
    features: FeatureMatrix | np.ndarray,
    labels: Sequence[int] | np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    *,
    task: str = "task",
    query_ids: Sequence[str] | None = None,
) -> LinearModel:
    """Fit one binary model on the given rows (caller restricts to the train split)."""
    X, qids, provenance = _resolve_features(features, query_ids)
    y = np.asarray(labels, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DataError("labels must align one-to-one with feature rows")
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError("labels must be 0 or 1")
    if not np.isfinite(X).all():
        raise DataError("features must be finite")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise DataError(
            f"training needs both classes; got {n_pos} positives out of {len(y)} rows"
        )

    lam = cfg.l2_strength
    n_samples, n_features = X.shape
    w = np.zeros(n_features, dtype=np.float64)
    b = 0.0
    y_sign = 2.0 * y - 1.0

    if lam > 0:
        eta0 = lam ** -0.25
        t0 = 1.0 / (eta0 * lam)
    else:
        eta0, t0 = 1.0, 1.0

    rng = np.random.default_rng(cfg.seed)
    t = 0
    best = math.inf
    stale_epochs = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n_samples) if cfg.shuffle_each_epoch else np.arange(n_samples)
        sum_loss = 0.0
        for i in order:
            x = X[i]
            ys = y_sign[i]
            margin = ys * (float(w @ x) + b)
            if margin > 0:
                sum_loss += math.log1p(math.exp(-margin))
            else:
                sum_loss += -margin + math.log1p(math.exp(margin))
            eta = 1.0 / (lam * (t0 + t)) if lam > 0 else eta0 / (t0 + t)
            grad_scale = ys * _sigmoid_scalar(-margin)
            if lam > 0:
                w *= 1.0 - 2.0 * eta * lam
            w += (eta * grad_scale) * x
            if cfg.fit_intercept:
                b += eta * grad_scale
            t += 1
        epoch_loss = sum_loss / n_samples + lam * float(w @ w)
        if epoch_loss > best - cfg.tolerance:
            stale_epochs += 1
        else:
            stale_epochs = 0
        best = min(best, epoch_loss)
        if stale_epochs >= _PATIENCE:
            break

    fingerprint = _fingerprint(cfg, provenance, qids, task)
    return LinearModel(
        query_ids=qids,
        weights=w,
        intercept=b if cfg.fit_intercept else 0.0,
        task=task,
        train_fingerprint=fingerprint,
        config=cfg,
    )


def _fingerprint(cfg: TrainConfig, provenance: dict, query_ids: Sequence[str], task: str) -> str:
    blob = json.dumps(
        {
            "config": cfg.to_json(),
            "provenance": provenance,
            "query_ids": list(query_ids),
            "task": task,
        },
        sort_keys=True,
    ).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _align_columns(model: LinearModel, features: FeatureMatrix | np.ndarray) -> np.ndarray:
    if isinstance(features, FeatureMatrix):
        missing = [q for q in model.query_ids if q not in features._query_index]
        if missing:
            raise DataError(f"feature matrix is missing query columns: {missing}")
        return features.select_queries(list(model.query_ids)).values
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != len(model.query_ids):
        raise DataError(
            f"expected {len(model.query_ids)} feature columns, got {X.shape[1]}"
        )
    return X


def decision_logits(model: LinearModel, features: FeatureMatrix | np.ndarray) -> np.ndarray:
    X = _align_columns(model, features)
    return X @ model.weights + model.intercept


def predict_proba(model: LinearModel, features: FeatureMatrix | np.ndarray) -> np.ndarray:
    """sigma(w.f + b) per row; columns aligned by query id for FeatureMatrix input."""
    logits = decision_logits(model, features)
    out = np.empty_like(logits)
    pos = logits >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    e = np.exp(logits[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def explain(model: LinearModel, features: Mapping[str, float] | np.ndarray) -> Explanation:
    """Per-query scores (value x coefficient) for one row, sorted descending."""
    if isinstance(features, Mapping):
        missing = [q for q in model.query_ids if q not in features]
        if missing:
            raise DataError(f"feature row is missing query values: {missing}")
        row = np.array([float(features[q]) for q in model.query_ids], dtype=np.float64)
    else:
        row = np.asarray(features, dtype=np.float64).reshape(-1)
        if row.shape[0] != len(model.query_ids):
            raise DataError(
                f"expected {len(model.query_ids)} feature values, got {row.shape[0]}"
            )
    scores = model.weights * row
    items = sorted(
        zip(model.query_ids, row, scores), key=lambda item: (-item[2], item[0])
    )
    logit = model.intercept + float(scores.sum())
    return Explanation(
        items=tuple((q, float(v), float(s)) for q, v, s in items),
        intercept=model.intercept,
        predicted_probability=_sigmoid_scalar(logit),
    )


def prune(
    model: LinearModel,
    drop: Iterable[str] = (),
    retrain: bool = False,
    features: FeatureMatrix | np.ndarray | None = None,
    labels: Sequence[int] | np.ndarray | None = None,
    cfg: TrainConfig | None = None,
) -> LinearModel:
    """Drop features either post-hoc (zero their weights) or by retraining.

    retrain=False zeroes the dropped coefficients and leaves everything else
    bit-identical, so the logit decreases by exactly sum(w_q * f_q) over the
    dropped columns. retrain=True fits a fresh model on the kept columns.
    """
    drop = set(drop)
    unknown = drop - set(model.query_ids)
    if unknown:
        raise DataError(f"cannot drop unknown query_ids: {sorted(unknown)}")
    if not drop:
        return model
    if not retrain:
        weights = model.weights.copy()
        for i, q in enumerate(model.query_ids):
            if q in drop:
                weights[i] = 0.0
        blob = f"{model.train_fingerprint}|zeroed:{','.join(sorted(drop))}"
        fingerprint = hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
        return LinearModel(
            query_ids=model.query_ids,
            weights=weights,
            intercept=model.intercept,
            task=model.task,
            train_fingerprint=fingerprint,
            config=model.config,
        )
    if features is None or labels is None or cfg is None:
        raise DataError("retrain=True requires features, labels, and a train config")
    kept = [q for q in model.query_ids if q not in drop]
    if isinstance(features, FeatureMatrix):
        sub = features.select_queries(kept)
        return train(sub, labels, cfg, task=model.task)
    X = _align_columns(model, features)
    keep_idx = [i for i, q in enumerate(model.query_ids) if q not in drop]
    return train(X[:, keep_idx], labels, cfg, task=model.task, query_ids=kept)
