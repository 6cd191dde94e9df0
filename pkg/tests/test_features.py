import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from badgevad.features import (FEATURE_NAMES, DatasetFormatError, FeatureMatrix, FeatureSet,
                               WindowDataset, assemble_features, build_dataset, dump_dataset,
                               l2_normalize_windows, load_dataset, loo_differences, make_windows,
                               normalize_l2, rolling_mean)
from badgevad.ingest import LabelMatrix, VolumeMatrix


def vm_from(values, t0=0):
    values = np.asarray(values, dtype=float)
    return VolumeMatrix(t0, [f"b{i}" for i in range(values.shape[1])], values)


# --- leave-one-out ------------------------------------------------------------

def test_loo_equal_badges_zero():
    vm = vm_from(np.full((5, 4), 3.7))
    for series in loo_differences(vm, "b2"):
        np.testing.assert_allclose(series, 0.0, atol=1e-15)


def test_loo_hand_values():
    vm = vm_from([[10.0, 2.0, 4.0]])
    mean_d, std_d, var_d = loo_differences(vm, "b0")
    assert mean_d[0] == pytest.approx(16 / 3 - 3)
    assert std_d[0] == pytest.approx(math.sqrt(34.666666666666664 / 3) - 1.0)
    assert std_d[0] == pytest.approx(2.3993, abs=1e-4)
    assert var_d[0] == pytest.approx(10.5556, abs=1e-4)


def test_loo_needs_two_badges():
    with pytest.raises(ValueError):
        loo_differences(vm_from([[1.0]]), "b0")


@given(arrays(np.float64, (7, 4), elements=st.floats(0, 100)))
@settings(max_examples=50, deadline=None)
def test_loo_matches_direct_statistics(vals):
    mean_d, std_d, var_d = loo_differences(vm_from(vals), "b1")
    others = np.delete(vals, 1, axis=1)
    np.testing.assert_allclose(mean_d, vals.mean(1) - others.mean(1), atol=1e-9)
    np.testing.assert_allclose(var_d, vals.var(1) - others.var(1), atol=1e-7)
    np.testing.assert_allclose(std_d, vals.std(1) - others.std(1), atol=1e-6)


# --- rolling mean ---------------------------------------------------------------

def test_rolling_constant_and_first_frame():
    np.testing.assert_allclose(rolling_mean(np.full(150, 2.5)), 2.5)
    x = np.random.default_rng(0).standard_normal(10)
    assert rolling_mean(x)[0] == x[0]


def test_rolling_step_hand_sums():
    r = rolling_mean(np.r_[np.zeros(60), np.full(60, 6.0)])
    assert r[119] == 6.0
    # window over indices 31..90: 29 zeros then 31 sixes
    assert r[90] == pytest.approx((29 * 0 + 31 * 6) / 60)
    assert r[89] == pytest.approx(3.0)


def test_rolling_restarts_after_gap():
    x = np.r_[np.full(10, 100.0), np.nan, np.full(5, 1.0)]
    r = rolling_mean(x)
    assert np.isnan(r[10])
    np.testing.assert_array_equal(r[11:], 1.0)


@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(-1e3, 1e3)))
@settings(max_examples=50, deadline=None)
def test_rolling_matches_naive(x):
    r = rolling_mean(x)
    naive = [x[max(0, t - 59):t + 1].mean() for t in range(len(x))]
    np.testing.assert_allclose(r, naive, rtol=1e-9, atol=1e-9)


# --- assembly -------------------------------------------------------------------

def test_set_b_constant_two_badges():
    fm = assemble_features(vm_from(np.full((70, 2), 4.0)), "b0", FeatureSet.SET_B)
    np.testing.assert_allclose(fm.values, np.tile([4.0, 0.0, 0.0], (70, 1)), atol=1e-15)


def test_one_channel_is_volume():
    vals = np.random.default_rng(1).random((80, 3))
    fm = assemble_features(vm_from(vals), "b2", FeatureSet.ONE_CHANNEL)
    np.testing.assert_array_equal(fm.values[:, 0], vals[:, 2])


def test_feature_set_columns():
    assert FeatureSet.SET_A.names == ("volume", "mean_diff_rm", "std_diff_rm", "var_diff_rm")
    assert FeatureSet.SET_B.names == FeatureSet.SET_A.names[:3]
    assert FeatureSet.SET_A.n_features == 4
    fm = assemble_features(vm_from(np.random.default_rng(2).random((65, 3))), "b0",
                           FeatureSet.SET_A)
    assert fm.feature_names == FEATURE_NAMES[FeatureSet.SET_A]
    with pytest.raises(ValueError):
        FeatureSet.parse("C")


# --- windows ------------------------------------------------------------------

def windows_for(n, gap_after=None):
    vals = np.random.default_rng(3).random((n, 3)) + 0.1
    if gap_after is not None:
        vals[gap_after + 1:gap_after + 7] = np.nan  # 300 ms gap
    vm = vm_from(vals)
    fm = assemble_features(vm, "b0", FeatureSet.SET_B)
    return make_windows(fm, np.zeros(n, dtype=np.uint8))


@pytest.mark.parametrize("n,expected", [(59, 0), (60, 1), (62, 3)])
def test_window_counts(n, expected):
    assert len(windows_for(n)) == expected


def test_window_counts_across_gap():
    # runs of 65 + 65 frames around a 6-frame gap
    assert len(windows_for(136, gap_after=64)) == 12


def test_window_label_is_final_frame_and_timestamps():
    vm = vm_from(np.ones((70, 2)), t0=1000)
    labels = np.zeros(70, dtype=np.uint8)
    labels[65] = 1
    ds = make_windows(assemble_features(vm, "b0", FeatureSet.ONE_CHANNEL), labels)
    assert ds.labels.tolist() == [0] * 6 + [1] + [0] * 4
    assert ds.end_timestamps_ms[0] == 1000 + 59 * 50
    assert np.all(np.diff(ds.end_timestamps_ms) == 50)


def test_window_stride():
    vm = vm_from(np.ones((200, 2)))
    ds = make_windows(assemble_features(vm, "b0", FeatureSet.SET_B), np.zeros(200), stride=50)
    assert len(ds) == 3


# --- normalization ------------------------------------------------------------

def test_l2_cases():
    w = np.zeros((1, 60, 3))
    w[0, :2, 0] = [3.0, 4.0]
    w[0, :, 2] = 1 / math.sqrt(60)
    out = l2_normalize_windows(w)
    np.testing.assert_allclose(out[0, :2, 0], [0.6, 0.8])
    np.testing.assert_array_equal(out[0, :, 1], 0.0)
    np.testing.assert_allclose(out[0, :, 2], w[0, :, 2])


def test_l2_scale_invariance_is_exact_for_powers_of_two():
    w = np.random.default_rng(4).standard_normal((5, 60, 3))
    np.testing.assert_array_equal(l2_normalize_windows(w), l2_normalize_windows(w * 8.0))


def test_normalize_twice_rejected():
    ds = windows_for(70)
    with pytest.raises(ValueError):
        normalize_l2(normalize_l2(ds))


# --- dataset container --------------------------------------------------------

def small_dataset():
    vals = np.random.default_rng(5).random((120, 3))
    vm = vm_from(vals)
    lab = (np.arange(120) % 7 == 0).astype(np.uint8)
    lm = LabelMatrix(0, vm.badge_ids, np.tile(lab[:, None], (1, 3)))
    return build_dataset(vm, lm, FeatureSet.SET_A, normalized=True)


def test_dataset_round_trip():
    ds = small_dataset()
    back = load_dataset(dump_dataset(ds))
    np.testing.assert_array_equal(back.samples, ds.samples)
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.end_timestamps_ms, ds.end_timestamps_ms)
    assert back.feature_set is ds.feature_set and back.normalized


def test_dataset_format_errors():
    blob = dump_dataset(small_dataset())
    with pytest.raises(DatasetFormatError):
        load_dataset(b"XXXX" + blob[4:])
    with pytest.raises(DatasetFormatError):
        load_dataset(blob[:-3])
    with pytest.raises(DatasetFormatError):
        load_dataset(blob + b"\0")


def test_dataset_rejects_bad_shapes():
    with pytest.raises(ValueError):
        WindowDataset(np.zeros((2, 60, 3)), np.zeros(3, dtype=np.uint8), np.arange(2),
                      FeatureSet.SET_B, False)
    with pytest.raises(ValueError):
        make_windows(FeatureMatrix("a", 0, FeatureSet.SET_B.names, np.zeros((70, 3))),
                     np.zeros(69))
