"""Scorer backends: yes/no continuation log-probabilities for a prompt.

All backends implement ``score(request) -> ScoreResponse`` and are safe for
concurrent invocation. Backends transport log-probabilities (natural log),
never probabilities; calibration happens downstream in the extract module.

Backends:
  * MockScorer  - deterministic keyword-count oracle used for tests and
    offline runs: logprob_yes = alpha * k + beta over keyword occurrences
    in the prompt's embedded source text, logprob_no = 0.
  * HttpScorer  - client for the ``POST /v1/score`` wire protocol with
    retries and a bounded in-flight request count.
  * NoisyScorer - wraps any backend, adding seeded Gaussian noise to
    logprob_yes; noise is a pure function of (seed, prompt) so results do
    not depend on scheduling order.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import httpx
import numpy as np

from .errors import DataError, ScorerError

CANDIDATES = ("yes", "no")
WIRE_PATH = "/v1/score"
DEFAULT_MAX_INFLIGHT = 8

ENV_ENDPOINT = "SCORER_ENDPOINT"
ENV_TOKEN = "SCORER_TOKEN"
ENV_MAX_INFLIGHT = "SCORER_MAX_INFLIGHT"


@dataclass(frozen=True)
class ScoreRequest:
    prompt: str
    candidates: tuple[str, str] = CANDIDATES


@dataclass(frozen=True)
class ScoreResponse:
    logprob_yes: float
    logprob_no: float
    prompt_token_count: int | None = None


def validate_request(request: ScoreRequest) -> None:
    """Enforce the scorer contract before dispatching to any backend."""
    if not request.prompt:
        raise ScorerError("score request has an empty prompt")
    if tuple(request.candidates) != CANDIDATES:
        raise ScorerError(
            f"score request candidates must be exactly {CANDIDATES}, got {tuple(request.candidates)!r}"
        )


@runtime_checkable
class Scorer(Protocol):
    """Contract every backend implements."""

    identity: str
    max_concurrency: int

    def score(self, request: ScoreRequest) -> ScoreResponse: ...


@dataclass(frozen=True)
class MockEntry:
    keywords: tuple[str, ...]
    alpha: float
    beta: float
    question: str = ""


class MockLexicon:
    """query_id -> (keywords, alpha, beta) table backing the mock scorer."""

    def __init__(self, entries: dict[str, MockEntry]):
        for qid, entry in entries.items():
            if not entry.keywords:
                raise DataError(f"lexicon entry {qid!r} has no keywords")
            if any(k != k.lower() for k in entry.keywords):
                raise DataError(f"lexicon entry {qid!r} keywords must be lowercase")
            if not math.isfinite(entry.alpha) or not math.isfinite(entry.beta):
                raise DataError(f"lexicon entry {qid!r} has non-finite alpha/beta")
        self.entries = dict(entries)

    def __contains__(self, query_id: str) -> bool:
        return query_id in self.entries

    def __getitem__(self, query_id: str) -> MockEntry:
        try:
            return self.entries[query_id]
        except KeyError:
            raise ScorerError(f"unknown query_id {query_id!r} in mock lexicon") from None

    def to_json(self) -> dict:
        return {
            qid: {
                "keywords": list(e.keywords),
                "alpha": e.alpha,
                "beta": e.beta,
                **({"question": e.question} if e.question else {}),
            }
            for qid, e in self.entries.items()
        }

    def content_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]

    @classmethod
    def from_json(cls, raw: dict) -> "MockLexicon":
        entries = {}
        for qid, spec in raw.items():
            if not isinstance(spec, dict) or "keywords" not in spec:
                raise DataError(f"lexicon entry {qid!r} must be an object with keywords/alpha/beta")
            entries[qid] = MockEntry(
                keywords=tuple(spec["keywords"]),
                alpha=float(spec.get("alpha", 1.0)),
                beta=float(spec.get("beta", 0.0)),
                question=str(spec.get("question", "")),
            )
        return cls(entries)

    @classmethod
    def load(cls, path: str | Path) -> "MockLexicon":
        path = Path(path)
        if not path.exists():
            raise DataError(f"lexicon file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: malformed JSON: {exc}") from exc
        return cls.from_json(raw)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")


def keyword_count(text: str, keywords: tuple[str, ...]) -> int:
    """Case-insensitive substring occurrence count, summed over keywords."""
    lowered = text.lower()
    return sum(lowered.count(k) for k in keywords)


def mock_score(request: ScoreRequest, lexicon: MockLexicon, query_id: str) -> ScoreResponse:
    """Deterministic oracle: logprob_yes = alpha*k + beta, logprob_no = 0.

    k counts lexicon keyword occurrences in the source text embedded in the
    prompt (between the template delimiters), not in the question itself.
    """
    validate_request(request)
    entry = lexicon[query_id]
    from .extract import split_prompt  # local import: extract depends on this module

    _, source_text, _ = split_prompt(request.prompt)
    k = keyword_count(source_text, entry.keywords)
    return ScoreResponse(logprob_yes=entry.alpha * k + entry.beta, logprob_no=0.0)


class MockScorer:
    """Scorer-contract wrapper over mock_score; resolves query_id by question text."""

    max_concurrency = 1

    def __init__(self, lexicon: MockLexicon):
        self.lexicon = lexicon
        self.identity = f"mock:{lexicon.content_hash()}"
        self._by_question = {
            e.question: qid for qid, e in lexicon.entries.items() if e.question
        }

    def score(self, request: ScoreRequest) -> ScoreResponse:
        validate_request(request)
        from .extract import split_prompt

        _, _, question = split_prompt(request.prompt)
        qid = self._by_question.get(question)
        if qid is None:
            raise ScorerError(
                f"mock lexicon has no entry whose question matches the prompt tail {question!r}"
            )
        return mock_score(request, self.lexicon, qid)


class NoisyScorer:
    """Adds Gaussian noise (std ``sigma``) to logprob_yes of an inner backend.

    The noise sample is derived from sha256(seed, prompt), so a given prompt
    always receives the same perturbation regardless of call order.
    """

    def __init__(self, inner: Scorer, sigma: float, seed: int):
        self.inner = inner
        self.sigma = float(sigma)
        self.seed = int(seed)
        self.identity = f"noisy(sigma={self.sigma},seed={self.seed}):{inner.identity}"
        self.max_concurrency = inner.max_concurrency

    def score(self, request: ScoreRequest) -> ScoreResponse:
        base = self.inner.score(request)
        digest = hashlib.sha256(
            f"{self.seed}\x1f{request.prompt}".encode("utf-8")
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        noise = float(rng.normal(0.0, self.sigma))
        return ScoreResponse(
            logprob_yes=base.logprob_yes + noise,
            logprob_no=base.logprob_no,
            prompt_token_count=base.prompt_token_count,
        )


class HttpScorer:
    """Client for the POST /v1/score wire protocol.

    Transient failures (connection errors, timeouts, 5xx) are retried with
    exponential backoff, 3 attempts total. At most ``max_inflight`` requests
    are on the wire at any time.
    """

    def __init__(
        self,
        endpoint: str,
        token: str | None = None,
        max_inflight: int = DEFAULT_MAX_INFLIGHT,
        timeout: float = 30.0,
        attempts: int = 3,
        backoff: float = 0.5,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.url = self.endpoint if self.endpoint.endswith(WIRE_PATH) else self.endpoint + WIRE_PATH
        self.identity = f"http:{self.url}"
        self.max_concurrency = max(1, int(max_inflight))
        self.attempts = attempts
        self.backoff = backoff
        self._sleep = sleep
        self._semaphore = threading.BoundedSemaphore(self.max_concurrency)
        headers = {"content-type": "application/json"}
        if token:
            headers["authorization"] = f"Bearer {token}"
        self._client = httpx.Client(headers=headers, timeout=timeout, transport=transport)

    @classmethod
    def from_env(cls, **overrides) -> "HttpScorer":
        endpoint = os.environ.get(ENV_ENDPOINT)
        if not endpoint:
            raise ScorerError(f"{ENV_ENDPOINT} is not set and no endpoint was given")
        kwargs: dict = {
            "token": os.environ.get(ENV_TOKEN),
            "max_inflight": int(os.environ.get(ENV_MAX_INFLIGHT, DEFAULT_MAX_INFLIGHT)),
        }
        kwargs.update(overrides)
        return cls(endpoint, **kwargs)

    def close(self) -> None:
        self._client.close()

    def score(self, request: ScoreRequest) -> ScoreResponse:
        validate_request(request)
        payload = {"prompt": request.prompt, "candidates": list(request.candidates)}
        last_error: Exception | None = None
        for attempt in range(self.attempts):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._semaphore:
                    response = self._client.post(self.url, json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = ScorerError(
                    f"scorer backend returned {response.status_code}: {response.text[:200]}"
                )
                continue
            if response.status_code != 200:
                raise ScorerError(
                    f"scorer backend returned {response.status_code}: {response.text[:200]}"
                )
            return self._parse(response)
        raise ScorerError(
            f"scorer backend unavailable after {self.attempts} attempts: {last_error}"
        )

    def _parse(self, response: httpx.Response) -> ScoreResponse:
        try:
            body = response.json()
            logprobs = body["logprobs"]
            ly, ln = float(logprobs["yes"]), float(logprobs["no"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ScorerError(
                f"scorer response does not match the wire schema ({exc!r}); raw body: "
                f"{response.text[:500]}"
            ) from exc
        if not (math.isfinite(ly) and math.isfinite(ln)):
            raise ScorerError(f"scorer returned non-finite log-probabilities: {response.text[:200]}")
        count = body.get("prompt_token_count")
        if count is not None:
            count = int(count)
            if count < 0:
                raise ScorerError(f"negative prompt_token_count in response: {response.text[:200]}")
        return ScoreResponse(logprob_yes=ly, logprob_no=ln, prompt_token_count=count)
