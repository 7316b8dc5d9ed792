import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqpoison import metrics as mt
from freqpoison.errors import MetricError

import oracles


# ---------------------------------------------------------------- attack


def test_clean_accuracy_basic():
    ps = mt.PredictionSet(predicted=[1, 2, 3], truth=[1, 2, 3], kind="clean")
    assert mt.clean_accuracy(ps) == 1.0
    ps = mt.PredictionSet(predicted=[0, 0, 0], truth=[1, 2, 3], kind="clean")
    assert mt.clean_accuracy(ps) == 0.0
    ps = mt.PredictionSet(predicted=[1, 2, 3, 4], truth=[1, 2, 3, 0], kind="clean")
    assert mt.clean_accuracy(ps) == 0.75


def test_asr_basic():
    ps = mt.PredictionSet(predicted=[7, 7, 7], truth=7, kind="poisoned")
    assert mt.asr(ps, 7) == 1.0
    ps = mt.PredictionSet(predicted=[1, 2, 3], truth=7, kind="poisoned")
    assert mt.asr(ps, 7) == 0.0
    ps = mt.PredictionSet(predicted=[7, 1, 7, 2], truth=7, kind="poisoned")
    assert mt.asr(ps, 7) == 0.5


def test_prediction_kind_checked():
    ps = mt.PredictionSet(predicted=[1], truth=[1], kind="clean")
    with pytest.raises(MetricError):
        mt.asr(ps, 1)
    with pytest.raises(MetricError):
        mt.clean_accuracy(
            mt.PredictionSet(predicted=[], truth=[], kind="clean")
        )


def test_accuracy_permutation_invariant(rng):
    preds = rng.integers(0, 5, 40)
    truth = rng.integers(0, 5, 40)
    perm = rng.permutation(40)
    a = mt.clean_accuracy(mt.PredictionSet(preds, truth, "clean"))
    b = mt.clean_accuracy(mt.PredictionSet(preds[perm], truth[perm], "clean"))
    assert a == b and 0.0 <= a <= 1.0


# ---------------------------------------------------------------- detection


def test_detection_scores_cases():
    s = mt.detection_scores(mt.DetectionCounts(tp=0, fp=0, fn=10, tn=90))
    assert s.tpr == 0.0 and s.fpr == 0.0 and s.f1_omega == 0.0
    s = mt.detection_scores(mt.DetectionCounts(tp=10, fp=0, fn=0, tn=0, omega=3.0))
    assert s.tpr == 1.0 and s.f1_omega == 1.0
    s = mt.detection_scores(mt.DetectionCounts(tp=8, fp=4, fn=2, tn=0, omega=1.0))
    assert s.f1_omega == pytest.approx(16 / 22)


def test_detection_undefined_rates():
    s = mt.detection_scores(mt.DetectionCounts(tp=0, fp=3, fn=0, tn=7))
    assert s.tpr is None  # no true poisons: undefined, not zero
    s = mt.detection_scores(mt.DetectionCounts(tp=2, fp=0, fn=1, tn=0))
    assert s.fpr is None
    s = mt.detection_scores(mt.DetectionCounts(tp=0, fp=0, fn=0, tn=5))
    assert s.f1_omega is None


def test_detection_counts_validated():
    with pytest.raises(MetricError):
        mt.DetectionCounts(tp=-1, fp=0, fn=0, tn=0)
    with pytest.raises(MetricError):
        mt.DetectionCounts(tp=1, fp=0, fn=0, tn=0, omega=0.0)


def test_f1_monotone_in_omega():
    counts = [(5, 3, 4, 10), (1, 0, 9, 5), (7, 7, 1, 1)]
    for tp, fp, fn, tn in counts:
        omegas = [0.5, 1.0, 2.0, 4.0, 8.0]
        vals = [
            mt.detection_scores(mt.DetectionCounts(tp, fp, fn, tn, omega=w)).f1_omega
            for w in omegas
        ]
        assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))


def test_f1_oracle_random():
    rng = np.random.default_rng(5)
    for _ in range(100):
        tp, fp, fn, tn = (int(v) for v in rng.integers(0, 50, 4))
        omega = float(rng.uniform(0.1, 5.0))
        got = mt.detection_scores(
            mt.DetectionCounts(tp, fp, fn, tn, omega=omega)
        )
        denom = 2 * tp + fp + omega * fn
        if denom > 0:
            assert abs(got.f1_omega - 2 * tp / denom) < 1e-12
        if tp + fn > 0:
            assert abs(got.tpr - tp / (tp + fn)) < 1e-12


# ---------------------------------------------------------------- stealth


def test_mse_identity_and_offset(rng):
    a = rng.random((16, 16, 3))
    assert mt.mse(a, a) == 0.0
    assert mt.mse(a, a + 0.1) == pytest.approx(0.01, abs=1e-12)


def test_mse_matches_oracle(rng):
    for _ in range(10):
        a = rng.random((8, 6, 3))
        b = rng.random((8, 6, 3))
        assert abs(mt.mse(a, b) - oracles.mse(a, b)) < 1e-12


def test_mse_shape_mismatch():
    with pytest.raises(MetricError):
        mt.mse(np.zeros((4, 4, 3)), np.zeros((5, 4, 3)))


def test_ssim_identity(rng):
    a = rng.random((16, 16, 3))
    assert mt.ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_ssim_symmetry(rng):
    a = rng.random((16, 16, 3))
    b = rng.random((16, 16, 3))
    assert abs(mt.ssim(a, b) - mt.ssim(b, a)) < 1e-12
    assert -1.0 <= mt.ssim(a, b) <= 1.0


def test_ssim_matches_direct_summation_oracle(rng):
    win = oracles.gaussian_window(11, 1.5)
    c1, c2 = 0.01**2, 0.03**2
    for _ in range(3):
        a = rng.random((14, 14, 3))
        b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
        want = np.mean(
            [
                oracles.ssim_single_channel(a[:, :, c], b[:, :, c], win, c1, c2)
                for c in range(3)
            ]
        )
        assert abs(mt.ssim(a, b) - want) < 1e-10


def test_ssim_too_small_image():
    with pytest.raises(MetricError):
        mt.ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


# ---------------------------------------------------------------- KDE


def test_averaged_distances_match_bruteforce(rng):
    train = rng.random((3, 2))
    test = rng.random((5, 2))
    got = mt.averaged_l2_distances(train, test)
    want = oracles.averaged_l2_distances(train, test)
    assert np.abs(got - want).max() < 1e-12


def test_kde_single_test_sample(rng):
    train = rng.random((4, 8))
    test = rng.random((1, 8))
    curve = mt.l2_kde(train, test)
    assert curve.bandwidth_fallback  # silverman degenerates on one point
    d = mt.averaged_l2_distances(train, test)[0]
    assert abs(curve.xs[np.argmax(curve.ys)] - d) < 2 * curve.bandwidth
    assert np.trapezoid(curve.ys, curve.xs) == pytest.approx(1.0, abs=0.01)


def test_kde_identical_sets_mass_near_zero(rng):
    # identical rows make every pairwise distance zero: degenerate spread
    # trips the fixed fallback bandwidth and the mass concentrates at zero
    feats = np.tile(rng.random((1, 3)), (4, 1))
    curve = mt.l2_kde(feats, feats)
    assert curve.bandwidth_fallback
    assert mt.averaged_l2_distances(feats, feats).max() == 0.0
    assert np.trapezoid(curve.ys, curve.xs) == pytest.approx(1.0, abs=0.01)
    near = curve.xs <= 4 * curve.bandwidth
    assert np.trapezoid(curve.ys[near], curve.xs[near]) > 0.95
    # same-matrix inputs in general position: every averaged distance
    # contains a zero self-term, so it is below the all-pairs mean
    general = rng.random((5, 3))
    avg = mt.averaged_l2_distances(general, general)
    diffs = general[:, None, :] - general[None, :, :]
    allpairs = np.sqrt((diffs**2).sum(axis=2))
    assert np.all(avg <= allpairs.max(axis=1))


def test_kde_integrates_to_one(rng):
    train = rng.random((6, 4)) * 3
    test = rng.random((40, 4)) * 3
    curve = mt.l2_kde(train, test)
    assert not curve.bandwidth_fallback
    assert len(curve.xs) >= 256
    assert np.all(curve.ys >= 0)
    assert np.trapezoid(curve.ys, curve.xs) == pytest.approx(1.0, abs=0.01)


def test_kde_shift_invariance(rng):
    train = rng.random((5, 4))
    test = rng.random((9, 4))
    shift = rng.random(4) * 10
    a = mt.l2_kde(train, test)
    b = mt.l2_kde(train + shift, test + shift)
    assert np.abs(a.xs - b.xs).max() < 1e-9
    assert np.abs(a.ys - b.ys).max() < 1e-9


def test_kde_dimension_mismatch(rng):
    with pytest.raises(MetricError):
        mt.l2_kde(rng.random((3, 4)), rng.random((3, 5)))


def test_explicit_bandwidth(rng):
    curve = mt.l2_kde(rng.random((3, 2)), rng.random((4, 2)), bandwidth=0.25)
    assert curve.bandwidth == 0.25 and not curve.bandwidth_fallback
    with pytest.raises(MetricError):
        mt.l2_kde(rng.random((3, 2)), rng.random((4, 2)), bandwidth=-1.0)


# ---------------------------------------------------------------- files


def test_feature_csv_roundtrip(rng, tmp_path):
    feats = rng.random((7, 5))
    path = str(tmp_path / "feats.csv")
    mt.write_features_csv(path, feats)
    back = mt.read_features(path)
    assert np.abs(back - feats).max() < 1e-15


def test_feature_raw_roundtrip(rng, tmp_path):
    feats = rng.random((7, 5)).astype(np.float32)
    path = str(tmp_path / "feats.json")
    mt.write_features_raw(path, feats)
    back = mt.read_features(path)
    assert np.abs(back - feats).max() == 0.0


def test_feature_raw_tamper_detected(rng, tmp_path):
    path = str(tmp_path / "feats.json")
    mt.write_features_raw(path, rng.random((4, 4)))
    with open(str(tmp_path / "feats.f32"), "r+b") as fh:
        fh.write(b"\x01\x02\x03\x04")
    with pytest.raises(MetricError):
        mt.read_features(path)


def test_predictions_roundtrip(tmp_path):
    path = str(tmp_path / "preds.csv")
    mt.write_predictions_csv(path, [0, 1, 5], [3, 3, 9])
    idx, preds = mt.read_predictions_csv(path)
    assert idx.tolist() == [0, 1, 5]
    assert preds.tolist() == [3, 3, 9]


def test_curve_csv(tmp_path, rng):
    curve = mt.l2_kde(rng.random((3, 2)), rng.random((4, 2)))
    path = str(tmp_path / "curve.csv")
    mt.write_curve_csv(path, curve)
    with open(path) as fh:
        lines = fh.read().strip().splitlines()
    assert lines[0] == "x,y"
    assert len(lines) == len(curve.xs) + 1


# ---------------------------------------------------------------- properties


@settings(max_examples=40, deadline=None)
@given(
    tp=st.integers(0, 100),
    fp=st.integers(0, 100),
    fn=st.integers(1, 100),
    tn=st.integers(0, 100),
    w1=st.floats(0.1, 10),
    w2=st.floats(0.1, 10),
)
def test_f1_monotonicity_property(tp, fp, fn, tn, w1, w2):
    lo, hi = sorted([w1, w2])
    f_lo = mt.detection_scores(mt.DetectionCounts(tp, fp, fn, tn, omega=lo)).f1_omega
    f_hi = mt.detection_scores(mt.DetectionCounts(tp, fp, fn, tn, omega=hi)).f1_omega
    if f_lo is not None and f_hi is not None:
        assert f_hi <= f_lo + 1e-12
