import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from badgevad.ingest import (BadgeSampleRecord, LabelMatrix, NoSpikeFound, ParseError,
                             ValidationError, VolumeMatrix, detect_sync_spike, format_labels,
                             format_samples, intervals_from_labels, parse_labels, parse_samples,
                             pivot_volumes, rasterize_labels, round_to_frame, validate_alignment)
from badgevad.simulate import SimConfig, simulate_meeting

HEADER = "timestamp_ms,badge_id,amplitude\n"


def rec(b, t, a):
    return BadgeSampleRecord(b, t, a)


# --- parsing -------------------------------------------------------------------

def test_parse_single_row():
    assert parse_samples(HEADER + "1000,b1,3.5\n") == [rec("b1", 1000, 3.5)]


def test_parse_sorts_by_time():
    out = parse_samples((HEADER + "1050,b1,1\n1000,b1,2\n").encode())
    assert [r.timestamp_ms for r in out] == [1000, 1050]


def test_parse_rejects_negative_amplitude_with_line_number():
    with pytest.raises(ValidationError, match="line 2"):
        parse_samples(HEADER + "1000,b1,-2\n")


@pytest.mark.parametrize("body,msg", [
    ("1000,b1\n", "line 2: expected 3 columns"),
    ("abc,b1,1\n", "line 2: non-numeric"),
    ("1000,b1,nan\n", "not finite"),
])
def test_parse_errors(body, msg):
    with pytest.raises(ParseError, match=msg):
        parse_samples(HEADER + body)


def test_parse_bad_header():
    with pytest.raises(ParseError, match="line 1"):
        parse_samples("t,b,a\n1,b1,1\n")


def test_samples_round_trip():
    recs = [rec("a", 0, 0.1), rec("a", 50, 1 / 3), rec("b", 0, 2.0)]
    assert parse_samples(format_samples(recs)) == recs


def test_labels_parse_merge_and_errors():
    iv = parse_labels('{"a": [{"start_ms": 100, "end_ms": 300}, {"start_ms": 200, "end_ms": 400}]}')
    assert iv == {"a": [(100, 400)]}
    assert parse_labels(format_labels(iv)) == iv
    with pytest.raises(ValidationError):
        parse_labels('{"a": [{"start_ms": 5, "end_ms": 5}]}')
    with pytest.raises(ParseError):
        parse_labels('{"a": [{"start_ms": 5}]}')
    with pytest.raises(ParseError):
        parse_labels("[1, 2]")


# --- gridding -------------------------------------------------------------------

def test_pivot_direct_placement():
    vm = pivot_volumes([rec("b1", 1000, 2.0), rec("b2", 1000, 4.0)])
    assert vm.t0_ms == 1000
    np.testing.assert_array_equal(vm.values, [[2.0, 4.0]])


def test_pivot_averages_within_frame():
    vm = pivot_volumes([rec("b1", 1000, 2.0), rec("b1", 1020, 4.0)])
    assert vm.values[0, 0] == 3.0


def test_pivot_forward_fills_short_gap():
    vm = pivot_volumes([rec("b1", 1000, 2.0), rec("b1", 1100, 5.0)])
    np.testing.assert_array_equal(vm.values[:, 0], [2.0, 2.0, 5.0])


def test_pivot_leaves_long_gap():
    vm = pivot_volumes([rec("b1", 0, 2.0), rec("b1", 300, 5.0)])
    assert np.isnan(vm.values[1:6, 0]).all()
    vm = pivot_volumes([rec("b1", 0, 2.0), rec("b1", 250, 5.0)])
    np.testing.assert_array_equal(vm.values[:, 0], [2, 2, 2, 2, 2, 5])


def test_pivot_does_not_fill_unbracketed_edges():
    vm = pivot_volumes([rec("a", 0, 1.0), rec("a", 200, 1.0), rec("b", 100, 3.0)])
    assert np.isnan(vm.values[0, 1]) and np.isnan(vm.values[3:, 1]).all()


def test_pivot_sorts_columns():
    vm = pivot_volumes([rec("z", 0, 1.0), rec("a", 0, 2.0)])
    assert vm.badge_ids == ["a", "z"]


# --- labels --------------------------------------------------------------------

def grid(t0=0, n=20, ids=("a",)):
    return VolumeMatrix(t0, list(ids), np.ones((n, len(ids))))


def test_round_to_frame_half_up():
    assert [round_to_frame(x) for x in (0, 24, 25, 74, 75, 130, 410)] == [0, 0, 50, 50, 100, 150, 400]


def test_rasterize_rounded_interval():
    lm = rasterize_labels({"a": [(130, 410)]}, grid())
    assert np.flatnonzero(lm.values[:, 0]).tolist() == [3, 4, 5, 6, 7]


def test_rasterize_empty_and_degenerate():
    assert not rasterize_labels({}, grid()).values.any()
    assert not rasterize_labels({"a": [(1000, 1010)]}, grid(t0=900)).values.any()


def test_rasterize_unknown_badge():
    with pytest.raises(ValidationError):
        rasterize_labels({"q": [(0, 100)]}, grid())


@given(st.lists(st.tuples(st.integers(0, 40), st.integers(1, 10)), max_size=6))
@settings(max_examples=60, deadline=None)
def test_intervals_round_trip_on_grid(spans):
    iv = {"a": [(50 * s, 50 * (s + d)) for s, d in spans]}
    g = grid(n=60)
    lm = rasterize_labels(iv, g)
    again = rasterize_labels(intervals_from_labels(lm), g)
    np.testing.assert_array_equal(lm.values, again.values)


# --- sync spike ----------------------------------------------------------------

def test_spike_recovered_from_simulation():
    out = simulate_meeting(SimConfig(n_badges=6, duration_s=120, seed=4, clap_onset_s=30))
    onset = detect_sync_spike(pivot_volumes(out.samples))
    assert abs(onset - (out.config.start_ms + 30_000)) <= 250


def test_spike_constant_stream():
    with pytest.raises(NoSpikeFound, match="no spike found"):
        detect_sync_spike(VolumeMatrix(0, ["a", "b", "c"], np.full((2000, 3), 4.0)))


def test_spike_needs_quorum():
    g = np.random.default_rng(0)
    vals = np.exp(0.2 * g.standard_normal((2400, 6)))
    vals[600:900, :2] += 50.0  # only 2 of 6 badges
    with pytest.raises(NoSpikeFound):
        detect_sync_spike(VolumeMatrix(0, list("abcdef"), vals))
    vals[600:900, 2:5] += 50.0  # now 5 of 6
    assert detect_sync_spike(VolumeMatrix(0, list("abcdef"), vals)) == 600 * 50


def test_spike_shorter_recording_than_window():
    with pytest.raises(ValidationError):
        detect_sync_spike(VolumeMatrix(0, ["a"], np.ones((10, 1))))


# --- alignment ------------------------------------------------------------------

def aligned_pair(ids=("A", "B", "C", "D"), n=100):
    vm = VolumeMatrix(0, list(ids), np.ones((n, len(ids))))
    return vm, LabelMatrix(0, list(ids), np.zeros((n, len(ids)), dtype=np.uint8))


def test_alignment_pass():
    vm, lm = aligned_pair()
    report = validate_alignment(vm, lm)
    assert report.ok and str(report) == "alignment ok"


def test_alignment_column_permutation():
    vm, lm = aligned_pair()
    perm = LabelMatrix(0, ["C", "D", "A", "B"], lm.values[:, [2, 3, 0, 1]])
    assert validate_alignment(vm, perm).checks == ["column order mismatch"]


def test_alignment_twenty_minute_offset():
    vm, lm = aligned_pair()
    late = LabelMatrix(20 * 60_000, lm.badge_ids, lm.values)
    assert validate_alignment(vm, late).checks == ["time range mismatch"]


def test_alignment_badge_set_and_spike():
    vm, lm = aligned_pair()
    other = LabelMatrix(0, ["A", "B", "C", "E"], lm.values)
    assert "badge set mismatch" in validate_alignment(vm, other).checks
    assert validate_alignment(vm, lm, 5000, 5400).ok
    assert validate_alignment(vm, lm, 5000, 5600).checks == ["sync spike mismatch"]
