"""Badge amplitude records, the 50 ms volume grid, label rasterization,
sync-spike detection and label/audio alignment checks.

Missing grid cells are stored as NaN.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

FRAME_MS = 50
MAX_FILL_GAP_MS = 250

SPIKE_PERCENTILE = 95.0
SPIKE_BADGE_QUORUM = 0.8
SPIKE_FRAME_FRACTION = 0.5
SPIKE_TOLERANCE_MS = 500

SAMPLES_HEADER = ("timestamp_ms", "badge_id", "amplitude")


class ParseError(ValueError):
    """Malformed input row or document."""


class ValidationError(ValueError):
    """Input that parses but violates a data invariant."""


class NoSpikeFound(LookupError):
    pass


@dataclass(frozen=True)
class BadgeSampleRecord:
    badge_id: str
    timestamp_ms: int
    amplitude: float

    def __post_init__(self):
        if self.timestamp_ms < 0:
            raise ValidationError(f"negative timestamp {self.timestamp_ms}")
        if not self.amplitude >= 0:
            raise ValidationError(f"amplitude must be >= 0, got {self.amplitude}")


@dataclass
class VolumeMatrix:
    """Time-gridded amplitudes: row ``t`` covers ``[t0 + 50t, t0 + 50(t+1))``."""

    t0_ms: int
    badge_ids: list[str]
    values: np.ndarray
    frame_ms: int = FRAME_MS

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.frame_ms != FRAME_MS:
            raise ValidationError(f"frame_ms must be {FRAME_MS}")
        if len(set(self.badge_ids)) != len(self.badge_ids):
            raise ValidationError("badge ids must be unique")
        if self.values.ndim != 2 or self.values.shape[1] != len(self.badge_ids):
            raise ValidationError(
                f"values shape {self.values.shape} does not match {len(self.badge_ids)} badges")
        if np.any(self.values < 0):
            raise ValidationError("volume values must be >= 0")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def timestamps(self) -> np.ndarray:
        return self.t0_ms + self.frame_ms * np.arange(self.n_frames, dtype=np.int64)

    def column(self, badge_id: str) -> np.ndarray:
        return self.values[:, self.badge_index(badge_id)]

    def badge_index(self, badge_id: str) -> int:
        try:
            return self.badge_ids.index(badge_id)
        except ValueError:
            raise KeyError(f"badge {badge_id!r} not in {self.badge_ids}") from None

    def shifted(self, delta_ms: int) -> VolumeMatrix:
        return VolumeMatrix(self.t0_ms + delta_ms, list(self.badge_ids), self.values.copy())


@dataclass
class LabelMatrix:
    t0_ms: int
    badge_ids: list[str]
    values: np.ndarray
    frame_ms: int = FRAME_MS

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.uint8)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.badge_ids):
            raise ValidationError("label values must be T x D")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    def column(self, badge_id: str) -> np.ndarray:
        return self.values[:, self.badge_ids.index(badge_id)]


LabelIntervals = dict[str, list[tuple[int, int]]]


# --- parsing -----------------------------------------------------------------

def parse_samples(csv_payload: bytes | str) -> list[BadgeSampleRecord]:
    """Parse a ``timestamp_ms,badge_id,amplitude`` CSV into sorted records."""
    text = csv_payload.decode("utf-8") if isinstance(csv_payload, bytes) else csv_payload
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty samples payload") from None
    if tuple(h.strip() for h in header) != SAMPLES_HEADER:
        raise ParseError(f"line 1: expected header {','.join(SAMPLES_HEADER)}, got {header}")
    records = []
    for row in reader:
        lineno = reader.line_num
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"line {lineno}: expected 3 columns, got {len(row)}")
        try:
            ts = int(row[0])
            amp = float(row[2])
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric field in {row}") from None
        if not math.isfinite(amp):
            raise ParseError(f"line {lineno}: amplitude is not finite")
        try:
            records.append(BadgeSampleRecord(row[1], ts, amp))
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
    records.sort(key=lambda r: (r.badge_id, r.timestamp_ms))
    return records


def format_samples(records) -> str:
    out = io.StringIO()
    out.write(",".join(SAMPLES_HEADER) + "\n")
    for r in records:
        out.write(f"{r.timestamp_ms},{r.badge_id},{r.amplitude!r}\n")
    return out.getvalue()


def parse_labels(payload: bytes | str) -> LabelIntervals:
    """Parse ``{badge_id: [{"start_ms": int, "end_ms": int}, ...]}``."""
    try:
        doc = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ParseError(f"labels JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("labels JSON must be an object keyed by badge id")
    intervals: LabelIntervals = {}
    for badge, items in doc.items():
        spans = []
        for k, item in enumerate(items):
            try:
                start, end = int(item["start_ms"]), int(item["end_ms"])
            except (KeyError, TypeError, ValueError):
                raise ParseError(f"labels[{badge!r}][{k}]: need integer start_ms/end_ms") from None
            if start >= end:
                raise ValidationError(f"labels[{badge!r}][{k}]: start_ms must be < end_ms")
            spans.append((start, end))
        intervals[badge] = merge_intervals(spans)
    return intervals


def format_labels(intervals: LabelIntervals) -> str:
    doc = {b: [{"start_ms": s, "end_ms": e} for s, e in spans]
           for b, spans in intervals.items()}
    return json.dumps(doc, indent=1) + "\n"


def merge_intervals(spans) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for s, e in sorted(spans):
        if merged and s <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], e))
        else:
            merged.append((s, e))
    return merged


# --- gridding ----------------------------------------------------------------

def pivot_volumes(records) -> VolumeMatrix:
    """Bin records onto the 50 ms grid, one column per badge (sorted ids).

    Each cell is the mean of its in-frame records.  Missing cells bracketed by
    observations at most 250 ms apart take the last observed value; longer or
    unbracketed gaps stay NaN.
    """
    if len(records) == 0:
        raise ValidationError("cannot pivot an empty record list")
    ts = np.fromiter((r.timestamp_ms for r in records), dtype=np.int64, count=len(records))
    amp = np.fromiter((r.amplitude for r in records), dtype=np.float64, count=len(records))
    badge_ids = sorted({r.badge_id for r in records})
    col_of = {b: i for i, b in enumerate(badge_ids)}
    cols = np.fromiter((col_of[r.badge_id] for r in records), dtype=np.int64, count=len(records))

    t0 = int(ts.min()) // FRAME_MS * FRAME_MS
    n_frames = (int(ts.max()) - t0) // FRAME_MS + 1
    rows = (ts - t0) // FRAME_MS
    D = len(badge_ids)
    sums = np.zeros(n_frames * D)
    counts = np.zeros(n_frames * D, dtype=np.int64)
    flat = rows * D + cols
    np.add.at(sums, flat, amp)
    np.add.at(counts, flat, 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = (sums / counts).reshape(n_frames, D)
    values[counts.reshape(n_frames, D) == 0] = np.nan
    for d in range(D):
        _fill_short_gaps(values[:, d])
    return VolumeMatrix(t0, badge_ids, values)


def _fill_short_gaps(col: np.ndarray) -> None:
    observed = np.flatnonzero(~np.isnan(col))
    if observed.size < 2:
        return
    steps = np.diff(observed)
    for k in np.flatnonzero((steps > 1) & (steps * FRAME_MS <= MAX_FILL_GAP_MS)):
        a, b = observed[k], observed[k + 1]
        col[a + 1:b] = col[a]


def round_to_frame(ms: int) -> int:
    """Nearest multiple of 50 ms, ties rounding up."""
    return (ms + FRAME_MS // 2) // FRAME_MS * FRAME_MS


def rasterize_labels(intervals: LabelIntervals, grid: VolumeMatrix) -> LabelMatrix:
    unknown = sorted(set(intervals) - set(grid.badge_ids))
    if unknown:
        raise ValidationError(f"label badges not in volume grid: {unknown}")
    T = grid.n_frames
    values = np.zeros((T, len(grid.badge_ids)), dtype=np.uint8)
    for badge, spans in intervals.items():
        d = grid.badge_ids.index(badge)
        for start, end in spans:
            s = (round_to_frame(start) - grid.t0_ms) // FRAME_MS
            e = (round_to_frame(end) - grid.t0_ms) // FRAME_MS
            s, e = max(s, 0), min(e, T)
            if e > s:
                values[s:e, d] = 1
    return LabelMatrix(grid.t0_ms, list(grid.badge_ids), values)


def intervals_from_labels(labels: LabelMatrix) -> LabelIntervals:
    """Inverse of :func:`rasterize_labels` on frame-aligned intervals."""
    out: LabelIntervals = {}
    for d, badge in enumerate(labels.badge_ids):
        col = np.concatenate([[0], labels.values[:, d].astype(np.int8), [0]])
        edges = np.diff(col)
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1)
        out[badge] = [(labels.t0_ms + FRAME_MS * int(s), labels.t0_ms + FRAME_MS * int(e))
                      for s, e in zip(starts, ends)]
    return out


# --- sync spike and alignment ------------------------------------------------

def detect_sync_spike(matrix: VolumeMatrix, expected_duration_s: float = 15.0,
                      percentile: float = SPIKE_PERCENTILE,
                      badge_quorum: float = SPIKE_BADGE_QUORUM,
                      frame_fraction: float = SPIKE_FRAME_FRACTION) -> int:
    """Locate a deliberate all-badge burst (e.g. group clapping).

    A frame is *hot* when at least ``badge_quorum`` of badges exceed their own
    ``percentile``, lowered for short recordings so the burst covers at most
    half of the frames above it (never below the median).  Among the earliest run of window positions whose window of
    ``expected_duration_s`` is at least ``frame_fraction`` hot, the densest
    window is taken and the onset is its first hot frame.
    """
    win = int(round(expected_duration_s * 1000 / FRAME_MS))
    vals = matrix.values
    T, D = vals.shape
    if win < 1 or T < win:
        raise ValidationError(
            f"matrix spans {T * FRAME_MS} ms, shorter than the {expected_duration_s} s spike")
    pct = max(50.0, min(percentile, 100.0 * (1.0 - 2.0 * win / T)))
    thresholds = np.nanpercentile(vals, pct, axis=0)
    with np.errstate(invalid="ignore"):
        above = vals > thresholds
    hot = above.sum(axis=1) >= math.ceil(badge_quorum * D - 1e-9)
    counts = np.convolve(hot.astype(np.int64), np.ones(win, dtype=np.int64), mode="valid")
    need = math.ceil(frame_fraction * win - 1e-9)
    qualifying = np.flatnonzero(counts >= need)
    if qualifying.size == 0:
        raise NoSpikeFound("no spike found")
    first = qualifying[0]
    breaks = np.flatnonzero(np.diff(qualifying) > 1)
    last = qualifying[breaks[0]] if breaks.size else qualifying[-1]
    best = first + int(np.argmax(counts[first:last + 1]))
    onset = best + int(np.argmax(hot[best:best + win]))
    return matrix.t0_ms + FRAME_MS * onset


@dataclass
class AlignmentReport:
    violations: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def checks(self) -> list[str]:
        return [name for name, _ in self.violations]

    def __str__(self) -> str:
        if self.ok:
            return "alignment ok"
        return "; ".join(f"{name}: {detail}" for name, detail in self.violations)


def validate_alignment(volumes: VolumeMatrix, labels: LabelMatrix,
                       volume_spike_ms: int | None = None,
                       declared_spike_ms: int | None = None,
                       tolerance_ms: int = SPIKE_TOLERANCE_MS) -> AlignmentReport:
    """Check that a label grid lines up with its volume grid.

    Violations are named ``"badge set mismatch"``, ``"column order mismatch"``,
    ``"time range mismatch"`` and ``"sync spike mismatch"``.  The spike check
    runs only when both a detected and a declared spike time are given.
    """
    report = AlignmentReport()
    if set(volumes.badge_ids) != set(labels.badge_ids):
        report.violations.append((
            "badge set mismatch",
            f"volumes {sorted(volumes.badge_ids)} vs labels {sorted(labels.badge_ids)}"))
    elif list(volumes.badge_ids) != list(labels.badge_ids):
        report.violations.append((
            "column order mismatch",
            f"volumes {list(volumes.badge_ids)} vs labels {list(labels.badge_ids)}"))
    if volumes.t0_ms != labels.t0_ms or volumes.n_frames != labels.n_frames:
        report.violations.append((
            "time range mismatch",
            f"volumes start {volumes.t0_ms} with {volumes.n_frames} frames, "
            f"labels start {labels.t0_ms} with {labels.n_frames} frames"))
    if volume_spike_ms is not None and declared_spike_ms is not None:
        if abs(volume_spike_ms - declared_spike_ms) > tolerance_ms:
            report.violations.append((
                "sync spike mismatch",
                f"detected {volume_spike_ms} vs declared {declared_spike_ms} ms"))
    return report
