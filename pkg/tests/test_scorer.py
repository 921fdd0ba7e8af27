import json
import math

import httpx
import pytest
from hypothesis import given, strategies as st

from queryfeat.errors import DataError, ScorerError
from queryfeat.extract import continuous_feature, get_template
from queryfeat.scorer import (
    HttpScorer,
    MockEntry,
    MockLexicon,
    MockScorer,
    NoisyScorer,
    ScoreRequest,
    ScoreResponse,
    keyword_count,
    mock_score,
)

# independently evaluated at 60-digit precision, rounded to float64
SIGMOID_MINUS_1 = 0.2689414213699951
SIGMOID_2 = 0.8807970779778824

TEMPLATE = get_template("clinical-note")


def prompt_for(text: str, question: str = "Does the patient have a fever?") -> str:
    return TEMPLATE.render(text, question)


def lexicon_with(keywords=("fever",), alpha=1.0, beta=-1.0) -> MockLexicon:
    return MockLexicon(
        {"q": MockEntry(keywords=tuple(keywords), alpha=alpha, beta=beta,
                        question="Does the patient have a fever?")}
    )


class TestMockScore:
    def test_single_keyword_hits_midpoint(self):
        # alpha=1, beta=-1, k=1 -> logit 0 -> calibrated feature exactly 0.5
        response = mock_score(ScoreRequest(prompt_for("fever overnight")), lexicon_with(), "q")
        assert response.logprob_yes == 0.0
        assert response.logprob_no == 0.0
        assert continuous_feature([response]) == 0.5

    def test_no_keyword(self):
        response = mock_score(ScoreRequest(prompt_for("all clear today")), lexicon_with(), "q")
        value = continuous_feature([response])
        assert value == pytest.approx(SIGMOID_MINUS_1, abs=1e-15)

    def test_three_keywords(self):
        response = mock_score(
            ScoreRequest(prompt_for("fever then fever then fever")), lexicon_with(), "q"
        )
        value = continuous_feature([response])
        assert value == pytest.approx(SIGMOID_2, abs=1e-15)

    def test_counts_source_text_not_question(self):
        # the question itself contains the keyword; it must not be counted
        response = mock_score(ScoreRequest(prompt_for("no findings")), lexicon_with(), "q")
        assert response.logprob_yes == -1.0

    def test_case_insensitive_substring(self):
        assert keyword_count("FEVER feverish", ("fever",)) == 2

    def test_unknown_query_id(self):
        with pytest.raises(ScorerError, match="unknown query_id"):
            mock_score(ScoreRequest(prompt_for("x y")), lexicon_with(), "other")

    def test_determinism_bit_identical(self):
        request = ScoreRequest(prompt_for("fever chills fever"))
        lex = lexicon_with(alpha=0.7, beta=-0.3)
        first = mock_score(request, lex, "q")
        second = mock_score(request, lex, "q")
        assert first == second

    @given(st.integers(min_value=0, max_value=30))
    def test_monotone_in_keyword_count(self, k):
        lex = lexicon_with(alpha=0.5, beta=-2.0)
        with_k = mock_score(ScoreRequest(prompt_for(" ".join(["fever"] * k) or "none")), lex, "q")
        with_k1 = mock_score(ScoreRequest(prompt_for(" ".join(["fever"] * (k + 1)))), lex, "q")
        assert with_k1.logprob_yes > with_k.logprob_yes

    def test_bad_candidates_rejected(self):
        request = ScoreRequest(prompt_for("x"), candidates=("yes", "maybe"))
        with pytest.raises(ScorerError, match="candidates"):
            mock_score(request, lexicon_with(), "q")

    def test_empty_prompt_rejected(self):
        with pytest.raises(ScorerError, match="empty prompt"):
            mock_score(ScoreRequest(""), lexicon_with(), "q")


class TestMockScorerBackend:
    def test_resolves_query_by_question(self):
        scorer = MockScorer(lexicon_with())
        response = scorer.score(ScoreRequest(prompt_for("fever fever")))
        assert response.logprob_yes == 1.0

    def test_unknown_question(self):
        scorer = MockScorer(lexicon_with())
        with pytest.raises(ScorerError, match="no entry"):
            scorer.score(ScoreRequest(prompt_for("x", question="Is there a rash?")))

    def test_identity_tracks_lexicon_content(self):
        a = MockScorer(lexicon_with(alpha=1.0))
        b = MockScorer(lexicon_with(alpha=2.0))
        assert a.identity != b.identity
        assert a.identity == MockScorer(lexicon_with(alpha=1.0)).identity


class TestLexiconValidation:
    def test_empty_keywords_rejected(self):
        with pytest.raises(DataError, match="no keywords"):
            MockLexicon({"q": MockEntry(keywords=(), alpha=1.0, beta=0.0)})

    def test_uppercase_keywords_rejected(self):
        with pytest.raises(DataError, match="lowercase"):
            MockLexicon({"q": MockEntry(keywords=("Fever",), alpha=1.0, beta=0.0)})

    def test_nonfinite_alpha_rejected(self):
        with pytest.raises(DataError, match="non-finite"):
            MockLexicon({"q": MockEntry(keywords=("x",), alpha=math.inf, beta=0.0)})

    def test_json_roundtrip(self, tmp_path):
        lex = lexicon_with(keywords=("fever", "chills"), alpha=0.5, beta=-0.25)
        path = tmp_path / "lex.json"
        lex.save(path)
        again = MockLexicon.load(path)
        assert again.entries == lex.entries


class TestNoisyScorer:
    def test_noise_is_schedule_independent(self):
        base = MockScorer(lexicon_with())
        noisy = NoisyScorer(base, sigma=1.0, seed=7)
        req_a = ScoreRequest(prompt_for("fever a"))
        req_b = ScoreRequest(prompt_for("fever b"))
        first = (noisy.score(req_a), noisy.score(req_b))
        second = (noisy.score(req_b), noisy.score(req_a))
        assert first == (second[1], second[0])

    def test_seed_changes_noise(self):
        base = MockScorer(lexicon_with())
        req = ScoreRequest(prompt_for("fever"))
        a = NoisyScorer(base, sigma=1.0, seed=1).score(req)
        b = NoisyScorer(base, sigma=1.0, seed=2).score(req)
        assert a.logprob_yes != b.logprob_yes
        assert a.logprob_no == b.logprob_no == 0.0

    def test_sigma_zero_is_identity(self):
        base = MockScorer(lexicon_with())
        req = ScoreRequest(prompt_for("fever"))
        assert NoisyScorer(base, sigma=0.0, seed=3).score(req) == base.score(req)


def http_scorer(handler, **kwargs):
    sleeps: list[float] = []
    scorer = HttpScorer(
        "http://scorer.test",
        transport=httpx.MockTransport(handler),
        sleep=sleeps.append,
        **kwargs,
    )
    return scorer, sleeps


class TestHttpScorer:
    def test_maps_wire_response(self):
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["path"] = request.url.path
            seen["body"] = json.loads(request.read().decode())
            return httpx.Response(
                200, json={"logprobs": {"yes": -0.2, "no": -1.8}, "prompt_token_count": 5}
            )

        scorer, _ = http_scorer(handler)
        response = scorer.score(ScoreRequest("Is it raining?"))
        assert response == ScoreResponse(-0.2, -1.8, prompt_token_count=5)
        assert seen["path"] == "/v1/score"
        assert seen["body"] == {"prompt": "Is it raining?", "candidates": ["yes", "no"]}

    def test_token_count_optional(self):
        scorer, _ = http_scorer(
            lambda request: httpx.Response(200, json={"logprobs": {"yes": -0.5, "no": -0.9}})
        )
        assert scorer.score(ScoreRequest("x")).prompt_token_count is None

    def test_retries_503_then_exhausts(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(503, text="overloaded")

        scorer, sleeps = http_scorer(handler)
        with pytest.raises(ScorerError, match="unavailable after 3 attempts"):
            scorer.score(ScoreRequest("x"))
        assert len(calls) == 3
        assert sleeps == [0.5, 1.0]  # exponential backoff

    def test_recovers_after_transient_failure(self):
        calls = []

        def handler(request):
            calls.append(1)
            if len(calls) < 3:
                return httpx.Response(500, text="boom")
            return httpx.Response(200, json={"logprobs": {"yes": -0.1, "no": -2.0}})

        scorer, _ = http_scorer(handler)
        assert scorer.score(ScoreRequest("x")).logprob_yes == -0.1

    def test_missing_candidate_is_schema_error(self):
        scorer, _ = http_scorer(
            lambda request: httpx.Response(200, json={"logprobs": {"yes": -0.2}})
        )
        with pytest.raises(ScorerError, match="wire schema.*raw body"):
            scorer.score(ScoreRequest("x"))

    def test_4xx_is_not_retried(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(404, text="no such route")

        scorer, _ = http_scorer(handler)
        with pytest.raises(ScorerError, match="404"):
            scorer.score(ScoreRequest("x"))
        assert len(calls) == 1

    def test_bearer_token_header(self):
        seen = {}

        def handler(request):
            seen["auth"] = request.headers.get("authorization")
            return httpx.Response(200, json={"logprobs": {"yes": -0.1, "no": -0.2}})

        scorer, _ = http_scorer(handler, token="s3cret")
        scorer.score(ScoreRequest("x"))
        assert seen["auth"] == "Bearer s3cret"

    def test_from_env(self, monkeypatch):
        monkeypatch.setenv("SCORER_ENDPOINT", "http://example.test")
        monkeypatch.setenv("SCORER_MAX_INFLIGHT", "3")
        scorer = HttpScorer.from_env(
            transport=httpx.MockTransport(
                lambda request: httpx.Response(200, json={"logprobs": {"yes": 0, "no": 0}})
            )
        )
        assert scorer.max_concurrency == 3
        assert scorer.url == "http://example.test/v1/score"

    def test_from_env_requires_endpoint(self, monkeypatch):
        monkeypatch.delenv("SCORER_ENDPOINT", raising=False)
        with pytest.raises(ScorerError, match="SCORER_ENDPOINT"):
            HttpScorer.from_env()

    def test_nonfinite_logprobs_rejected(self):
        scorer, _ = http_scorer(
            lambda request: httpx.Response(200, json={"logprobs": {"yes": "nan", "no": -1}})
        )
        with pytest.raises(ScorerError, match="non-finite"):
            scorer.score(ScoreRequest("x"))
