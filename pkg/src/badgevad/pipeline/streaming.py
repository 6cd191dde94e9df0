"""Causal frame-by-frame prediction."""
from __future__ import annotations

import collections
import time
import warnings
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

import numpy as np

from ..features import WINDOW, FeatureSet, feature_columns, l2_normalize_windows
from ..ingest import FRAME_MS, MAX_FILL_GAP_MS, VolumeMatrix
from ..models import TrainedModel, forward

LATENCY_BUDGET_S = 10.0
PREDICTION_COLUMNS = ("timestamp_ms", "badge_id", "probability", "decision")


@dataclass(frozen=True)
class StreamDecision:
    timestamp_ms: int
    badge_id: str
    probability: float
    decision: int
    latency_s: float  # wall clock from frame arrival to emission


class StreamPredictor:
    """Emit one decision per primary badge per frame once 60 valid frames are buffered.

    Frames are pushed in time order as one amplitude per badge (NaN for a
    missing reading).  Up to 250 ms of skipped frames are bridged with the
    previous frame; a longer jump, or a frame the primary cannot use, ends the
    run and the next decision waits for 60 fresh frames.
    """

    def __init__(self, model: TrainedModel, badge_ids, primaries=None, threshold: float = 0.5):
        self.model = model
        self.badge_ids = list(badge_ids)
        fs = model.spec.feature_set
        if fs is not FeatureSet.ONE_CHANNEL and len(self.badge_ids) < 2:
            raise ValueError("leave-one-out features need at least two badges")
        primaries = self.badge_ids if primaries is None else list(primaries)
        unknown = [p for p in primaries if p not in self.badge_ids]
        if unknown:
            raise ValueError(f"unknown primary badge(s) {unknown}")
        self.primaries = primaries
        self._cols = [self.badge_ids.index(p) for p in primaries]
        self.threshold = threshold
        # a window ending at t needs rows t-118..t for its first rolling mean
        self._buffers = [collections.deque(maxlen=2 * WINDOW - 1) for _ in primaries]
        self._last_ts: int | None = None
        self._last_row: np.ndarray | None = None
        self.rejected = 0

    def _row_ok(self, row: np.ndarray, col: int) -> bool:
        if self.model.spec.feature_set is FeatureSet.ONE_CHANNEL:
            return bool(np.isfinite(row[col]))
        return bool(np.all(np.isfinite(row)))

    def reset(self) -> None:
        for buf in self._buffers:
            buf.clear()

    def push(self, timestamp_ms: int, amplitudes) -> list[StreamDecision]:
        arrived = time.perf_counter()
        if isinstance(amplitudes, Mapping):
            row = np.array([amplitudes.get(b, np.nan) for b in self.badge_ids], dtype=np.float64)
        else:
            row = np.asarray(amplitudes, dtype=np.float64).reshape(-1)
            if row.size != len(self.badge_ids):
                raise ValueError(f"expected {len(self.badge_ids)} amplitudes, got {row.size}")
        ts = int(timestamp_ms)
        if ts % FRAME_MS:
            raise ValueError(f"timestamp {ts} is not on the {FRAME_MS} ms grid")
        if self._last_ts is not None and ts <= self._last_ts:
            warnings.warn(f"out-of-order frame at {ts} ms (last {self._last_ts} ms) rejected",
                          stacklevel=2)
            self.rejected += 1
            return []

        # bridge short skips with the previous frame, reset on long ones
        stamps, rows = [ts], [row]
        if self._last_ts is not None:
            step = ts - self._last_ts
            if step > MAX_FILL_GAP_MS:
                self.reset()
            elif step > FRAME_MS:
                fill = range(self._last_ts + FRAME_MS, ts, FRAME_MS)
                stamps = list(fill) + stamps
                rows = [self._last_row] * len(fill) + rows
        self._last_ts, self._last_row = ts, row

        pending = []  # (timestamp, primary slot, window)
        for t, r in zip(stamps, rows):
            for k, col in enumerate(self._cols):
                buf = self._buffers[k]
                if not self._row_ok(r, col):
                    buf.clear()
                    continue
                buf.append(r)
                if len(buf) >= WINDOW:
                    feats = feature_columns(np.array(buf), col, self.model.spec.feature_set)
                    pending.append((t, k, feats[-WINDOW:]))
        if not pending:
            return []
        batch = np.stack([w for _, _, w in pending])
        if self.model.spec.normalized:
            batch = l2_normalize_windows(batch)
        probs = forward(self.model, batch, exact=True)
        done = time.perf_counter() - arrived
        return [StreamDecision(t, self.primaries[k], float(p), int(p >= self.threshold), done)
                for (t, k, _), p in zip(pending, probs)]


def replay_frames(volumes: VolumeMatrix) -> Iterable[tuple[int, np.ndarray]]:
    """Frames of a recording in time order, skipping frames with no readings at all."""
    ts = volumes.timestamps
    for i in range(volumes.n_frames):
        row = volumes.values[i]
        if np.any(np.isfinite(row)):
            yield int(ts[i]), row


def predict_stream(model: TrainedModel, frames: Iterable[tuple[int, object]], badge_ids,
                   primaries=None, threshold: float = 0.5) -> list[StreamDecision]:
    sp = StreamPredictor(model, badge_ids, primaries, threshold)
    out: list[StreamDecision] = []
    for ts, amps in frames:
        out.extend(sp.push(ts, amps))
    return out


def decisions_csv(decisions: Iterable[StreamDecision]) -> str:
    lines = [",".join(PREDICTION_COLUMNS)]
    for d in decisions:
        lines.append(f"{d.timestamp_ms},{d.badge_id},{d.probability!r},{d.decision}")
    return "\n".join(lines) + "\n"
