import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from queryfeat.errors import DataError, IllDefinedMetricError
from queryfeat.metrics import (
    BootstrapInterval,
    bootstrap_ci,
    auroc,
    classification_metrics,
    coefficient_entropy,
    macro_average,
    make_report,
    ranking_alignment,
    RankingReport,
    reports_to_csv,
    save_reports,
)

# independently evaluated at 60-digit precision, rounded to float64
LN_4 = 1.3862943611198906
ENTROPY_SOFTMAX_10_0 = 0.0004993775862412086


def pairwise_auroc(scores, labels):
    """O(n^2) reference: positive-vs-negative pairs, ties worth 1/2."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / float(len(pos) * len(neg))


class TestAuroc:
    def test_perfect_ranking(self):
        assert auroc([0.9, 0.8, 0.2], [1, 1, 0]) == 1.0

    def test_inverted_ranking(self):
        assert auroc([0.2, 0.8], [1, 0]) == 0.0

    def test_all_tied_scores(self):
        assert auroc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == pairwise_auroc(
            [0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]
        ) == 0.5

    def test_single_class_raises(self):
        with pytest.raises(IllDefinedMetricError):
            auroc([0.1, 0.2], [1, 1])

    def test_matches_pairwise_oracle_exactly(self):
        rng = np.random.default_rng(1234)
        for _ in range(200):
            n = int(rng.integers(2, 51))
            # coarse grid injects plenty of ties
            scores = rng.integers(0, 6, size=n) / 5.0
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert auroc(scores, labels) == pairwise_auroc(scores.tolist(), labels.tolist())

    def test_invariant_under_increasing_transform(self):
        rng = np.random.default_rng(7)
        scores = rng.normal(size=40)
        labels = (rng.random(40) < 0.4).astype(int)
        labels[0], labels[1] = 0, 1
        assert auroc(scores, labels) == auroc(np.exp(scores), labels)

    def test_complement_identity(self):
        rng = np.random.default_rng(11)
        scores = rng.integers(0, 4, size=30) / 3.0
        labels = rng.integers(0, 2, size=30)
        labels[0], labels[1] = 0, 1
        assert auroc(scores, labels) + auroc(scores, 1 - labels) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            auroc([0.1], [1, 0])


class TestClassificationMetrics:
    def test_basic_arithmetic(self):
        m = classification_metrics([1, 1, 0], [1, 0, 0])
        assert (m.precision, m.recall) == (0.5, 1.0)
        assert m.f1 == pytest.approx(2 / 3, rel=1e-15)

    def test_no_positive_predictions_scores_zero(self):
        m = classification_metrics([0, 0, 0], [1, 0, 1])
        assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)

    def test_no_positive_labels_scores_zero(self):
        m = classification_metrics([1, 0, 1], [0, 0, 0])
        assert (m.recall, m.f1) == (0.0, 0.0)

    def test_identity_predictions(self):
        m = classification_metrics([1, 0, 1], [1, 0, 1])
        assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)


class TestRankingAlignment:
    def test_enumerated_example(self):
        result = ranking_alignment(
            {"q1": 3.0, "q2": 2.0, "q3": 1.0, "q4": -1.0}, {"q1", "q3"}, ks=(1, 2)
        )
        assert result.precision_at == {1: 1.0, 2: 0.5}
        assert result.auc == 0.75  # 3 of 4 positive-negative pairs correctly ordered

    def test_all_relevant(self):
        result = ranking_alignment({"a": 1.0, "b": 0.5}, {"a", "b"}, ks=(1, 2))
        assert result.precision_at == {1: 1.0, 2: 1.0}
        assert result.auc is None  # no negatives

    def test_relevant_ranked_last(self):
        coefs = {f"q{i}": float(5 - i) for i in range(5)}  # q0 highest .. q4 lowest
        result = ranking_alignment(coefs, {"q4"}, ks=(1,))
        assert result.precision_at[1] == 0.0
        assert result.auc == 0.0

    def test_ties_break_by_query_id(self):
        result = ranking_alignment({"b": 1.0, "a": 1.0, "c": 0.0}, {"a"}, ks=(1,))
        assert result.ranked_query_ids == ("a", "b", "c")
        assert result.precision_at[1] == 1.0

    def test_k_beyond_size_keeps_k_denominator(self):
        result = ranking_alignment({"a": 1.0, "b": 0.5}, {"a", "b"}, ks=(5,))
        assert result.precision_at[5] == 2 / 5

    def test_unknown_relevant_id(self):
        with pytest.raises(DataError, match="unknown"):
            ranking_alignment({"a": 1.0}, {"zz"})

    def test_report_averages(self):
        per_label = {
            "t1": ranking_alignment({"a": 2.0, "b": 1.0}, {"a"}, ks=(1,)),
            "t2": ranking_alignment({"a": 2.0, "b": 1.0}, {"b"}, ks=(1,)),
        }
        report = RankingReport.build(per_label)
        assert report.average_precision_at[1] == 0.5
        assert report.average_auc == 0.5


class TestCoefficientEntropy:
    def test_equal_magnitudes_hit_ln_n(self):
        assert coefficient_entropy([1.0, -1.0, 1.0, 1.0]) == pytest.approx(LN_4, abs=1e-12)

    def test_concentrated_weights(self):
        assert coefficient_entropy([10.0, 0.0]) == pytest.approx(
            ENTROPY_SOFTMAX_10_0, abs=1e-15
        )

    def test_single_weight_is_zero(self):
        assert coefficient_entropy([5.0]) == 0.0

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=40))
    def test_bounded_by_ln_n(self, weights):
        h = coefficient_entropy(weights)
        assert -1e-12 <= h <= math.log(len(weights)) + 1e-9

    @given(st.floats(0.01, 50), st.integers(min_value=2, max_value=30))
    def test_equality_iff_equal_magnitudes(self, magnitude, n):
        signs = [(-1.0) ** i for i in range(n)]
        weights = [magnitude * s for s in signs]
        assert coefficient_entropy(weights) == pytest.approx(math.log(n), abs=1e-9)


class TestBootstrap:
    def test_constant_statistic(self):
        interval = bootstrap_ci(lambda idx: 0.5, n=20, resamples=100, seed=0)
        assert (interval.low, interval.high) == (0.5, 0.5)
        assert interval.n_valid == 100

    def test_seed_determinism(self):
        rng = np.random.default_rng(3)
        data = rng.normal(size=50)
        stat = lambda idx: float(np.mean(data[idx]))
        a = bootstrap_ci(stat, n=50, resamples=200, seed=9)
        b = bootstrap_ci(stat, n=50, resamples=200, seed=9)
        assert a == b

    def test_interval_width_shrinks_with_n(self):
        # simulated AUROC data: scores shifted by label; width falls as n x10,
        # consistently across five independent simulations
        for run in range(5):
            widths = []
            for n in (50, 500):
                rng = np.random.default_rng(100 + run)
                labels = (rng.random(n) < 0.5).astype(int)
                labels[:2] = [0, 1]
                scores = rng.normal(size=n) + labels
                stat = lambda idx: auroc(scores[idx], labels[idx])
                ci = bootstrap_ci(stat, n=n, resamples=500, seed=run)
                widths.append(ci.high - ci.low)
            assert widths[1] < widths[0]

    def test_skips_ill_defined_draws(self):
        labels = np.array([1] * 19 + [0])
        scores = np.arange(20.0)

        def stat(idx):
            return auroc(scores[idx], labels[idx])

        interval = bootstrap_ci(stat, n=20, resamples=300, seed=5)
        assert interval.n_skipped > 0
        assert interval.n_valid + interval.n_skipped == 300

    def test_majority_ill_defined_fails(self):
        def stat(idx):
            raise IllDefinedMetricError("always")

        with pytest.raises(IllDefinedMetricError, match="bootstrap failed"):
            bootstrap_ci(stat, n=10, resamples=50, seed=0)


class TestReports:
    def test_macro_average(self):
        reports = [
            make_report("t/a", 0.8, n=10),
            make_report("t/b", 0.6, n=10),
        ]
        macro = macro_average(reports, metric="t")
        assert macro.point_estimate == pytest.approx(0.7)
        assert macro.n == 2

    def test_macro_single_label_identity(self):
        macro = macro_average([make_report("only", 0.4, n=3)])
        assert macro.point_estimate == 0.4

    def test_macro_excludes_ill_defined(self):
        reports = [
            make_report("a", 0.9, n=5),
            make_report("b", None, n=0, note="ill-defined"),
        ]
        macro = macro_average(reports, metric="m")
        assert macro.point_estimate == pytest.approx(0.9)
        assert macro.n == 1
        assert "1 of 2" in macro.note
        assert macro.per_label["b"].point_estimate is None

    def test_ci_always_contains_point_estimate(self):
        ci = BootstrapInterval(low=0.5, high=0.6, n_valid=10, n_skipped=0)
        report = make_report("m", 0.7, ci=ci)
        assert report.ci_low <= report.point_estimate <= report.ci_high

    def test_json_and_csv_outputs(self, tmp_path):
        report = make_report(
            "task",
            0.75,
            ci=BootstrapInterval(0.7, 0.8, 100, 0),
            n=50,
            per_label={"x": make_report("x", 0.75, n=50)},
        )
        path = tmp_path / "r.json"
        save_reports([report], path)
        assert '"point_estimate": 0.75' in path.read_text()
        csv_text = reports_to_csv([report])
        assert csv_text.splitlines()[0].startswith("metric,label")
        assert any("x" in line for line in csv_text.splitlines()[1:])
