"""Synthetic corpus generator: documents with planted keyword evidence,
latent binary features, and labels drawn from a fixed logistic ground truth.

Every acceptance-grade run works offline: the generator emits a dataset, a
query set (two queries flagged custom), a mock-scorer lexicon whose entries
mirror the planted keywords, downstream task questions, and the ground-truth
weights, so end-to-end results are exactly recomputable.

Construction guarantees:
  * each latent feature has distinctive keywords that appear in a document
    iff the latent is active (asserted at generation time), so noiseless
    extraction ranks reference indicators perfectly;
  * keywords never collide as substrings with each other or the filler
    vocabulary, keeping occurrence counts exact;
  * label probabilities are logistic in the latent vector, so small linear
    models over well-extracted features can approach the Bayes ranking;
  * each active latent also sprinkles words from a 40-word "halo"
    vocabulary, echoing the diffuse correlated phrasing of real notes:
    bag-of-words models must spread coefficient mass over many weak terms
    while the keyword queries stay concentrated.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Dataset, load_dataset
from .errors import DataError
from .scorer import MockEntry, MockLexicon

DATASET_FILE = "dataset.jsonl"
QUERIES_FILE = "queries.json"
LEXICON_FILE = "lexicon.json"
DOWNSTREAM_FILE = "downstream.json"
TRUTH_FILE = "truth.json"


@dataclass(frozen=True)
class LatentFeature:
    query_id: str
    question: str
    keywords: tuple[str, ...]
    prevalence: float
    alpha: float
    beta: float
    custom: bool = False


# Twelve latent findings. Keywords are single tokens, mutually substring-free.
FEATURES: tuple[LatentFeature, ...] = (
    LatentFeature("has_cardiomegaly", "Does this patient have an enlarged heart?",
                  ("cardiomegaly",), 0.38, 2.2, -1.1),
    LatentFeature("has_atelectasis", "Does this patient have collapsed lung tissue?",
                  ("atelectasis",), 0.30, 2.0, -1.0),
    LatentFeature("has_pneumothorax", "Does this patient have air in the pleural space?",
                  ("pneumothorax",), 0.22, 2.4, -1.2),
    LatentFeature("has_empyema", "Does this patient have pus in the pleural space?",
                  ("empyema",), 0.20, 1.8, -0.9),
    LatentFeature("has_cavitation", "Does this patient have cavitation?",
                  ("cavitation",), 0.26, 2.0, -1.0),
    LatentFeature("has_granuloma", "Does this patient have a granuloma?",
                  ("granuloma",), 0.33, 2.2, -1.1),
    LatentFeature("has_osteopenia", "Does this patient have thinning bones?",
                  ("osteopenia",), 0.40, 1.6, -0.8),
    LatentFeature("has_hemothorax", "Does this patient have blood in the pleural space?",
                  ("hemothorax",), 0.18, 2.0, -1.0),
    LatentFeature("has_bronchiectasis", "Does this patient have widened airways?",
                  ("bronchiectasis",), 0.28, 2.4, -1.2),
    LatentFeature("has_stenosis", "Does this patient have a narrowed vessel?",
                  ("stenosis",), 0.35, 1.8, -0.9),
    LatentFeature("has_embolism", "Does this patient have a blood clot in the lungs?",
                  ("embolism",), 0.24, 2.2, -1.1, custom=True),
    LatentFeature("has_fibrosis", "Does this patient have scarred lung tissue?",
                  ("fibrosis",), 0.31, 2.0, -1.0, custom=True),
)


@dataclass(frozen=True)
class LabelModel:
    label: str
    weights: dict[str, float]
    intercept: float
    downstream_question: str
    downstream_keywords: tuple[str, ...] = ()
    unlabeled_fraction: float = 0.0


LABELS: tuple[LabelModel, ...] = (
    LabelModel(
        "deterioration",
        {
            "has_cardiomegaly": 5.2, "has_atelectasis": -4.4, "has_pneumothorax": 6.0,
            "has_empyema": 4.8, "has_cavitation": -3.6, "has_granuloma": 0.0,
            "has_osteopenia": 0.0, "has_hemothorax": 5.6, "has_bronchiectasis": -4.8,
            "has_stenosis": 4.0, "has_embolism": 6.4, "has_fibrosis": -4.0,
        },
        -4.2,
        "Is this patient at risk of deterioration?",
        ("pneumothorax", "embolism", "hemothorax"),
    ),
    LabelModel(
        "prolonged_stay",
        {
            "has_cardiomegaly": 4.3, "has_atelectasis": 3.6, "has_pneumothorax": 0.0,
            "has_empyema": 5.3, "has_cavitation": 4.6, "has_granuloma": -3.8,
            "has_osteopenia": 0.0, "has_hemothorax": 3.4, "has_bronchiectasis": 4.8,
            "has_stenosis": -4.3, "has_embolism": 3.8, "has_fibrosis": 5.0,
        },
        -5.4,
        "Will this patient need a prolonged stay?",
        ("empyema", "fibrosis", "bronchiectasis"),
        unlabeled_fraction=0.02,
    ),
    LabelModel(
        "finding/infection",
        {
            "has_cardiomegaly": 0.0, "has_atelectasis": 0.0, "has_pneumothorax": 0.0,
            "has_empyema": 7.8, "has_cavitation": 6.7, "has_granuloma": 5.6,
            "has_osteopenia": 0.0, "has_hemothorax": 0.0, "has_bronchiectasis": 4.5,
            "has_stenosis": 0.0, "has_embolism": 0.0, "has_fibrosis": -4.2,
        },
        -5.2,
        "Does this report suggest an infection?",
        ("empyema", "cavitation"),
    ),
    LabelModel(
        "finding/cardiac",
        {
            "has_cardiomegaly": 8.4, "has_atelectasis": 0.0, "has_pneumothorax": 0.0,
            "has_empyema": 0.0, "has_cavitation": 0.0, "has_granuloma": 0.0,
            "has_osteopenia": -3.9, "has_hemothorax": 0.0, "has_bronchiectasis": 0.0,
            "has_stenosis": 6.7, "has_embolism": 5.6, "has_fibrosis": 0.0,
        },
        -5.6,
        "Does this report suggest a cardiac finding?",
        ("cardiomegaly", "stenosis"),
    ),
    LabelModel(
        "finding/chronic",
        {
            "has_cardiomegaly": 4.5, "has_atelectasis": 0.0, "has_pneumothorax": -4.2,
            "has_empyema": 0.0, "has_cavitation": 0.0, "has_granuloma": 5.0,
            "has_osteopenia": 6.2, "has_hemothorax": 0.0, "has_bronchiectasis": 6.7,
            "has_stenosis": 0.0, "has_embolism": 0.0, "has_fibrosis": 7.3,
        },
        -8.0,
        "Does this report suggest chronic disease?",
        ("fibrosis", "osteopenia", "bronchiectasis"),
    ),
)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 42
    n_train: int = 2000
    n_test: int = 500
    long_doc_fraction: float = 0.03
    filler_vocab_size: int = 800
    mean_extra_mentions: float = 0.4
    halo_size: int = 40
    mean_halo_mentions: float = 8.0


def _filler_vocabulary(size: int) -> list[str]:
    """Deterministic pseudo-clinical filler words, free of keyword collisions."""
    onsets = ["br", "cl", "cr", "dr", "fl", "gl", "gr", "pl", "pr", "sl",
              "sp", "st", "tr", "v", "m", "n", "l", "r", "d", "t"]
    nuclei = ["a", "e", "i", "o", "u", "ea", "ou", "ai"]
    codas = ["x", "n", "m", "l", "rt", "nd", "st", "sk", "p", "ck"]
    keywords = [k for f in FEATURES for k in f.keywords]
    vocab: list[str] = []
    for onset, nucleus, coda in itertools.product(onsets, nuclei, codas):
        word = onset + nucleus + coda
        if any(kw in word or word in kw for kw in keywords):
            continue
        vocab.append(word)
        if len(vocab) == size:
            return vocab
    return vocab


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + np.exp(-x))


def generate(cfg: SynthConfig, out_dir: str | Path) -> Dataset:
    """Write the corpus bundle into out_dir and return the loaded dataset."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    vocabulary = _filler_vocabulary(cfg.filler_vocab_size)
    n_halo = cfg.halo_size * len(FEATURES)
    if len(vocabulary) < n_halo + 100:
        raise DataError("filler vocabulary construction failed")
    halos = {
        f.query_id: vocabulary[i * cfg.halo_size : (i + 1) * cfg.halo_size]
        for i, f in enumerate(FEATURES)
    }
    filler = vocabulary[n_halo:]

    n_docs = cfg.n_train + cfg.n_test
    records = []
    for i in range(n_docs):
        doc_id = f"doc-{i:05d}"
        split = "train" if i < cfg.n_train else "test"
        latents = {f.query_id: int(rng.random() < f.prevalence) for f in FEATURES}
        long_doc = rng.random() < cfg.long_doc_fraction
        n_words = int(rng.integers(550, 900)) if long_doc else int(rng.integers(80, 220))
        words = [filler[j] for j in rng.integers(0, len(filler), size=n_words)]
        for feature in FEATURES:
            if not latents[feature.query_id]:
                continue
            mentions = 1 + int(min(rng.poisson(cfg.mean_extra_mentions), 3))
            for _ in range(mentions):
                keyword = feature.keywords[int(rng.integers(0, len(feature.keywords)))]
                position = int(rng.integers(0, len(words) + 1))
                words.insert(position, keyword)
            halo = halos[feature.query_id]
            for j in rng.integers(0, len(halo), size=rng.poisson(cfg.mean_halo_mentions)):
                position = int(rng.integers(0, len(words) + 1))
                words.insert(position, halo[j])
        text = " ".join(words)
        for feature in FEATURES:  # planted evidence must be exact
            k = sum(text.count(kw) for kw in feature.keywords)
            assert (k > 0) == bool(latents[feature.query_id]), feature.query_id
        labels = {}
        for lm in LABELS:
            if lm.unlabeled_fraction and rng.random() < lm.unlabeled_fraction:
                continue
            logit = lm.intercept + sum(
                lm.weights[q] * latents[q] for q in lm.weights
            )
            labels[lm.label] = int(rng.random() < _sigmoid(logit))
        records.append(
            {
                "doc_id": doc_id,
                "text": text,
                "labels": labels,
                "split": split,
                "reference_features": latents,
            }
        )

    dataset_path = out_dir / DATASET_FILE
    with dataset_path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")

    queries = {
        "name": f"synthetic-seed{cfg.seed}",
        "queries": [
            {
                "query_id": f.query_id,
                "question": f.question,
                "template_id": "clinical-note",
                "custom": f.custom,
                "expected_support": {
                    lm.label: ("supports" if lm.weights[f.query_id] > 0 else "not-relevant")
                    for lm in LABELS
                },
            }
            for f in FEATURES
        ],
    }
    (out_dir / QUERIES_FILE).write_text(json.dumps(queries, indent=2) + "\n", encoding="utf-8")

    entries = {
        f.query_id: MockEntry(
            keywords=f.keywords, alpha=f.alpha, beta=f.beta, question=f.question
        )
        for f in FEATURES
    }
    for lm in LABELS:
        entries[lm.label] = MockEntry(
            keywords=lm.downstream_keywords,
            alpha=0.8,
            beta=-1.2,
            question=lm.downstream_question,
        )
    MockLexicon(entries).save(out_dir / LEXICON_FILE)

    downstream = {
        "name": "downstream",
        "downstream": True,
        "queries": [
            {
                "query_id": lm.label,
                "question": lm.downstream_question,
                "template_id": "clinical-note",
                "custom": False,
            }
            for lm in LABELS
        ],
    }
    (out_dir / DOWNSTREAM_FILE).write_text(
        json.dumps(downstream, indent=2) + "\n", encoding="utf-8"
    )

    truth = {
        "config": {
            "seed": cfg.seed,
            "n_train": cfg.n_train,
            "n_test": cfg.n_test,
            "long_doc_fraction": cfg.long_doc_fraction,
            "filler_vocab_size": cfg.filler_vocab_size,
            "mean_extra_mentions": cfg.mean_extra_mentions,
        },
        "features": {
            f.query_id: {
                "keywords": list(f.keywords),
                "prevalence": f.prevalence,
                "alpha": f.alpha,
                "beta": f.beta,
                "custom": f.custom,
            }
            for f in FEATURES
        },
        "labels": {
            lm.label: {"weights": lm.weights, "intercept": lm.intercept}
            for lm in LABELS
        },
    }
    (out_dir / TRUTH_FILE).write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")

    return load_dataset(dataset_path)
