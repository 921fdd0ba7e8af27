import numpy as np
import pytest
from hypothesis import given, strategies as st

from queryfeat.baselines import (
    DownstreamQuery,
    TfidfVocabulary,
    fit_tfidf,
    tfidf_features,
    tfidf_matrix,
    tokenize,
    zero_shot_downstream,
)
from queryfeat.core import Document
from queryfeat.errors import DataError
from queryfeat.extract import ChunkingConfig, score_document

# independently evaluated: [2,1] / sqrt(5)
TWO_OVER_SQRT5 = 0.8944271909999159
ONE_OVER_SQRT5 = 0.4472135954999579


def doc(text, doc_id="d"):
    return Document(doc_id=doc_id, text=text)


class TestFitTfidf:
    def test_frequency_then_lexicographic(self):
        vocab = fit_tfidf([doc("a b", "1"), doc("a c", "2")], vocab_size=2)
        assert vocab.terms == ("a", "b")

    def test_idf_of_ubiquitous_term_is_one(self):
        vocab = fit_tfidf([doc("x y", "1"), doc("x z", "2")], vocab_size=3)
        idf = dict(zip(vocab.terms, vocab.idf()))
        assert idf["x"] == 1.0

    def test_cap_does_not_pad(self):
        corpus = [doc(" ".join(f"t{i}" for i in range(50)), "1")]
        vocab = fit_tfidf(corpus, vocab_size=30000)
        assert len(vocab.terms) == 50

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError, match="empty corpus"):
            fit_tfidf([], vocab_size=10)

    def test_determinism(self):
        corpus = [doc("b a c a", "1"), doc("c b", "2"), doc("a", "3")]
        assert fit_tfidf(corpus, 3) == fit_tfidf(corpus, 3)

    def test_tokenizer_lowercases_alphanumeric_runs(self):
        assert tokenize("Pt-119 IS stable; BP 120/80") == [
            "pt", "119", "is", "stable", "bp", "120", "80",
        ]

    def test_json_roundtrip(self, tmp_path):
        vocab = fit_tfidf([doc("a b c", "1"), doc("a b", "2")], vocab_size=3)
        path = tmp_path / "vocab.json"
        vocab.save(path)
        assert TfidfVocabulary.load(path) == vocab


class TestTfidfFeatures:
    def test_out_of_vocabulary_doc_is_zero_vector(self):
        vocab = fit_tfidf([doc("a b", "1")], vocab_size=2)
        vec = tfidf_features(doc("z z z"), vocab)
        assert np.all(vec == 0.0)

    def test_single_term_is_unit_vector(self):
        vocab = fit_tfidf([doc("a b", "1"), doc("b", "2")], vocab_size=2)
        vec = tfidf_features(doc("a"), vocab)
        nonzero = vec[vec != 0]
        assert nonzero.tolist() == [1.0]

    def test_hand_arithmetic_two_terms(self):
        # both terms in both docs -> idf 1; doc "a a b" -> [2,1]/sqrt(5)
        vocab = fit_tfidf([doc("a b", "1"), doc("b a", "2")], vocab_size=2)
        vec = tfidf_features(doc("a a b"), vocab)
        by_term = dict(zip(vocab.terms, vec))
        assert by_term["a"] == pytest.approx(TWO_OVER_SQRT5, abs=1e-15)
        assert by_term["b"] == pytest.approx(ONE_OVER_SQRT5, abs=1e-15)

    @given(st.text(alphabet="abc xyz0", min_size=0, max_size=60))
    def test_norm_is_one_or_zero(self, text):
        vocab = fit_tfidf([doc("a b c xyz0"), doc("a c")], vocab_size=4)
        vec = tfidf_features(doc(text or "."), vocab)
        norm = float(np.sqrt(vec @ vec))
        assert norm == 0.0 or abs(norm - 1.0) <= 4 * np.finfo(float).eps

    def test_matrix_wraps_rows(self):
        corpus = [doc("a b", "1"), doc("b c", "2")]
        vocab = fit_tfidf(corpus, vocab_size=3)
        matrix = tfidf_matrix(corpus, vocab)
        assert matrix.doc_ids == ("1", "2")
        assert matrix.query_ids == vocab.terms
        np.testing.assert_array_equal(matrix.values[0], tfidf_features(corpus[0], vocab))


class TestZeroShotDownstream:
    def test_shares_feature_code_path(self, tiny_scorer):
        document = doc("fever fever and chills", "d9")
        dq = DownstreamQuery(task="readmit", question="Does the patient have a fever?")
        cfg = ChunkingConfig()
        direct = score_document(document.text, dq.question, dq.template_id, tiny_scorer, cfg)
        assert zero_shot_downstream(document, dq, tiny_scorer, cfg) == direct

    def test_no_keyword_matches_calibrated_floor(self, tiny_scorer):
        # mock entry q_fever: alpha=1, beta=-1; absent keyword -> sigma(-1)
        value = zero_shot_downstream(
            doc("clear lungs no issues"),
            DownstreamQuery(task="readmit", question="Does the patient have a fever?"),
            tiny_scorer,
        )
        assert value == pytest.approx(0.2689414213699951, abs=1e-15)

    def test_equal_masses_give_half(self, tiny_scorer):
        value = zero_shot_downstream(
            doc("fever noted once"),
            DownstreamQuery(task="readmit", question="Does the patient have a fever?"),
            tiny_scorer,
        )
        assert value == 0.5

    def test_multi_chunk_pools_max(self, tiny_scorer):
        # keyword only in the second chunk; max pooling must find it
        text = " ".join(["filler"] * 512) + " fever fever fever"
        value = zero_shot_downstream(
            doc(text),
            DownstreamQuery(task="readmit", question="Does the patient have a fever?"),
            tiny_scorer,
        )
        first_chunk_only = zero_shot_downstream(
            doc(" ".join(["filler"] * 512)),
            DownstreamQuery(task="readmit", question="Does the patient have a fever?"),
            tiny_scorer,
        )
        assert value > first_chunk_only

    def test_empty_question_rejected(self):
        with pytest.raises(DataError):
            DownstreamQuery(task="t", question="")
