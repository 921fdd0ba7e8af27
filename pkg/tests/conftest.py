"""Shared fixtures: tiny hand-checkable corpora and lexicons."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from queryfeat.core import load_dataset, load_queries
from queryfeat.scorer import MockEntry, MockLexicon, MockScorer


def write_jsonl(path: Path, records: list[dict]) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return path


@pytest.fixture
def tiny_dataset(tmp_path):
    """Two train + two test documents with one binary task and references."""
    records = [
        {
            "doc_id": "d1",
            "text": "patient stable with fever and cough overnight",
            "labels": {"readmit": 1},
            "split": "train",
            "reference_features": {"q_fever": 1, "q_rash": 0},
        },
        {
            "doc_id": "d2",
            "text": "no acute distress noted on rounds",
            "labels": {"readmit": 0},
            "split": "train",
            "reference_features": {"q_fever": 0, "q_rash": 0},
        },
        {
            "doc_id": "d3",
            "text": "fever persists fever spikes recorded",
            "labels": {"readmit": 1},
            "split": "test",
            "reference_features": {"q_fever": 1, "q_rash": 0},
        },
        {
            "doc_id": "d4",
            "text": "afebrile and comfortable this morning",
            "labels": {"readmit": 0},
            "split": "test",
            "reference_features": {"q_fever": 0, "q_rash": 0},
        },
    ]
    return load_dataset(write_jsonl(tmp_path / "tiny.jsonl", records))


@pytest.fixture
def tiny_queries(tmp_path):
    payload = {
        "name": "tiny",
        "queries": [
            {
                "query_id": "q_fever",
                "question": "Does the patient have a fever?",
                "template_id": "clinical-note",
                "custom": False,
                "expected_support": {"readmit": "supports"},
            },
            {
                "query_id": "q_rash",
                "question": "Does the patient have a rash?",
                "template_id": "clinical-note",
                "custom": False,
                "expected_support": {"readmit": "not-relevant"},
            },
            {
                "query_id": "q_chronic",
                "question": "Does the patient have a chronic illness?",
                "template_id": "clinical-note",
                "custom": True,
            },
        ],
    }
    return load_queries(write_json(tmp_path / "tiny-queries.json", payload))


@pytest.fixture
def tiny_lexicon():
    return MockLexicon(
        {
            "q_fever": MockEntry(
                keywords=("fever",), alpha=1.0, beta=-1.0,
                question="Does the patient have a fever?",
            ),
            "q_rash": MockEntry(
                keywords=("rash",), alpha=1.0, beta=-1.0,
                question="Does the patient have a rash?",
            ),
            "q_chronic": MockEntry(
                keywords=("chronic", "persists"), alpha=0.5, beta=-0.25,
                question="Does the patient have a chronic illness?",
            ),
        }
    )


@pytest.fixture
def tiny_scorer(tiny_lexicon):
    return MockScorer(tiny_lexicon)


class CountingScorer:
    """Delegating scorer that counts calls (for cache-hit assertions)."""

    def __init__(self, inner):
        self.inner = inner
        self.identity = inner.identity
        self.max_concurrency = inner.max_concurrency
        self.calls = 0

    def score(self, request):
        self.calls += 1
        return self.inner.score(request)
