import numpy as np
import pytest

from minutecast.metrics import (
    EvalReport,
    ThresholdVector,
    build_report,
    calibrate_thresholds,
    decide,
    optimal_threshold,
    per_label_f1,
    samples_f1,
    weighted_f1,
)


def brute_force_threshold(scores, labels):
    """Oracle: try every distinct score plus {0, 1} as the threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if labels.sum() == 0:
        return 1.0, 0.0
    best_tau, best_f1 = 0.0, -1.0
    for tau in sorted(set(scores.tolist()) | {0.0, 1.0}):
        pred = scores >= tau
        tp = float((pred & labels).sum())
        fp = float((pred & ~labels).sum())
        fn = float((~pred & labels).sum())
        denom = 2 * tp + fp + fn
        f1 = 2 * tp / denom if denom else 0.0
        if f1 > best_f1:
            best_tau, best_f1 = tau, f1
    return best_tau, best_f1


# the worked 3-sample / 2-label fixture: rows are samples, columns labels A, B
FIXTURE_TRUTHS = np.array([[1, 0], [1, 1], [0, 1]], dtype=np.float64)
FIXTURE_PREDS = np.array([[1, 0], [0, 1], [1, 1]], dtype=np.float64)


class TestOptimalThreshold:
    def test_worked_example(self):
        tau, f1 = optimal_threshold([0.1, 0.35, 0.4, 0.8], [0, 1, 0, 1])
        assert abs(tau - 0.225) < 1e-12
        assert abs(f1 - 0.8) < 1e-12

    def test_perfect_separation(self):
        tau, f1 = optimal_threshold([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
        assert f1 == 1.0
        assert 0.2 < tau <= 0.8

    def test_no_positives_convention(self):
        tau, f1 = optimal_threshold([0.3, 0.5], [0, 0])
        assert (tau, f1) == (1.0, 0.0)

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            optimal_threshold([], [])

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(123)
        for _ in range(300):
            n = int(rng.integers(1, 40))
            scores = rng.uniform(0, 1, n)
            labels = rng.integers(0, 2, n)
            _, fast = optimal_threshold(scores, labels)
            _, slow = brute_force_threshold(scores, labels)
            assert fast == slow

    def test_tie_breaks_to_largest_threshold(self):
        # candidates here are {0, 0.5, 1}; only 0 is perfect
        tau, f1 = optimal_threshold([0.4, 0.6], [1, 1])
        assert (tau, f1) == (0.0, 1.0)
        # a score of exactly 1.0 makes tau=0 and tau=1 both perfect; the tie
        # must resolve to the larger threshold
        tau2, f12 = optimal_threshold([1.0], [1])
        assert (tau2, f12) == (1.0, 1.0)


class TestCalibrateAndDecide:
    def test_one_threshold_per_label(self):
        rng = np.random.default_rng(5)
        probs = rng.uniform(0, 1, (30, 4))
        truths = rng.integers(0, 2, (30, 4)).astype(float)
        tv = calibrate_thresholds(probs, truths)
        assert tv.thresholds.shape == (4,)
        assert tv.validation_f1.shape == (4,)

    def test_label_without_positives_never_predicted(self):
        probs = np.array([[0.9, 0.2], [0.8, 0.1]])
        truths = np.array([[1.0, 0.0], [1.0, 0.0]])
        tv = calibrate_thresholds(probs, truths)
        assert tv.thresholds[1] == 1.0
        preds = decide(probs, tv.thresholds)
        assert preds[:, 1].sum() == 0

    def test_recalibration_identical(self):
        rng = np.random.default_rng(6)
        probs = rng.uniform(0, 1, (20, 3))
        truths = rng.integers(0, 2, (20, 3)).astype(float)
        a = calibrate_thresholds(probs, truths)
        b = calibrate_thresholds(probs, truths)
        assert (a.thresholds == b.thresholds).all()

    def test_empty_validation_errors(self):
        with pytest.raises(ValueError):
            calibrate_thresholds(np.zeros((0, 3)), np.zeros((0, 3)))

    def test_boundary_inclusive(self):
        preds = decide(np.array([[0.5, 0.49]]), np.array([0.5, 0.5]))
        assert preds.tolist() == [[1.0, 0.0]]

    def test_raising_threshold_never_adds_predictions(self):
        rng = np.random.default_rng(7)
        probs = rng.uniform(0, 1, (40, 6))
        taus = rng.uniform(0, 1, 6)
        base = decide(probs, taus)
        for i in range(6):
            higher = taus.copy()
            higher[i] = min(1.0, taus[i] + 0.2)
            assert (decide(probs, higher)[:, i] <= base[:, i]).all()

    def test_all_below_threshold(self):
        preds = decide(np.full((3, 2), 0.1), np.array([0.5, 0.6]))
        assert preds.sum() == 0


class TestMetrics:
    def test_fixture_per_label(self):
        f1 = per_label_f1(FIXTURE_PREDS, FIXTURE_TRUTHS)
        assert abs(f1[0] - 0.5) < 1e-12
        assert abs(f1[1] - 1.0) < 1e-12

    def test_fixture_weighted(self):
        report = build_report(FIXTURE_PREDS, FIXTURE_TRUTHS, ("A", "B"))
        assert abs(report.weighted_f1 - 0.75) < 1e-12

    def test_fixture_samples(self):
        assert abs(samples_f1(FIXTURE_PREDS, FIXTURE_TRUTHS) - 7.0 / 9.0) < 1e-12

    def test_perfect_predictions(self):
        f1 = per_label_f1(FIXTURE_TRUTHS, FIXTURE_TRUTHS)
        assert (f1 == 1.0).all()
        assert samples_f1(FIXTURE_TRUTHS, FIXTURE_TRUTHS) == 1.0

    def test_absent_label_zero_support_excluded(self):
        preds = np.array([[1.0, 0.0], [0.0, 0.0]])
        truths = np.array([[1.0, 0.0], [0.0, 0.0]])
        report = build_report(preds, truths, ("A", "B"))
        assert report.support[1] == 0
        assert report.f1[1] == 0.0
        assert report.weighted_f1 == 1.0  # only label A carries weight

    def test_empty_sets_count_as_one(self):
        preds = np.zeros((2, 3))
        truths = np.zeros((2, 3))
        assert samples_f1(preds, truths) == 1.0

    def test_half_overlap(self):
        preds = np.array([[0.0, 1.0, 1.0]])
        truths = np.array([[1.0, 1.0, 0.0]])
        assert abs(samples_f1(preds, truths) - 0.5) < 1e-12

    def test_zero_total_support(self):
        assert weighted_f1(np.array([0.0, 0.0]), np.array([0.0, 0.0])) == 0.0

    def test_metrics_bounded(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            preds = rng.integers(0, 2, (12, 5)).astype(float)
            truths = rng.integers(0, 2, (12, 5)).astype(float)
            report = build_report(preds, truths, tuple("abcde"))
            assert 0.0 <= report.weighted_f1 <= 1.0
            assert 0.0 <= report.samples_f1 <= 1.0
            assert (report.f1 >= 0).all() and (report.f1 <= 1).all()


class TestReportSerialization:
    def test_round_trip(self):
        report = build_report(FIXTURE_PREDS, FIXTURE_TRUTHS, ("A", "B"), split="test")
        doc = report.to_dict()
        again = EvalReport.from_dict(doc)
        assert again.to_dict() == doc

    def test_threshold_vector_round_trip(self):
        tv = ThresholdVector(np.array([0.1, 0.9]), np.array([0.5, 0.7]))
        assert ThresholdVector.from_dict(tv.to_dict()).to_dict() == tv.to_dict()

    def test_threshold_vector_validation(self):
        with pytest.raises(ValueError):
            ThresholdVector(np.array([1.5]), np.array([0.0]))
