"""Leave-one-out channel features, 3 s rolling means, window slicing and
per-window L2 normalization.

All reductions here are written as explicit left-to-right accumulations so a
frame's value depends only on the numbers that enter it, never on how long the
surrounding array is.  The streaming predictor relies on this to reproduce the
offline features bit for bit.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from .ingest import FRAME_MS, LabelMatrix, VolumeMatrix

WINDOW = 60


class FeatureSet(enum.Enum):
    ONE_CHANNEL = "1"
    SET_A = "A"
    SET_B = "B"

    @property
    def names(self) -> tuple[str, ...]:
        return FEATURE_NAMES[self]

    @property
    def n_features(self) -> int:
        return len(FEATURE_NAMES[self])

    @classmethod
    def parse(cls, text: str) -> FeatureSet:
        key = text.strip().upper()
        aliases = {"1": cls.ONE_CHANNEL, "ONE": cls.ONE_CHANNEL, "ONE_CHANNEL": cls.ONE_CHANNEL,
                   "A": cls.SET_A, "SET_A": cls.SET_A, "B": cls.SET_B, "SET_B": cls.SET_B}
        if key not in aliases:
            raise ValueError(f"unknown feature set {text!r}; valid: ONE_CHANNEL (1), A, B")
        return aliases[key]


FEATURE_NAMES = {
    FeatureSet.ONE_CHANNEL: ("volume",),
    FeatureSet.SET_A: ("volume", "mean_diff_rm", "std_diff_rm", "var_diff_rm"),
    FeatureSet.SET_B: ("volume", "mean_diff_rm", "std_diff_rm"),
}
_SET_CODES = {FeatureSet.ONE_CHANNEL: 0, FeatureSet.SET_A: 1, FeatureSet.SET_B: 2}


@dataclass
class FeatureMatrix:
    primary_badge: str
    t0_ms: int
    feature_names: tuple[str, ...]
    values: np.ndarray
    frame_ms: int = FRAME_MS

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return np.all(np.isfinite(self.values), axis=1)


@dataclass
class WindowDataset:
    samples: np.ndarray          # (N, 60, F)
    labels: np.ndarray           # (N,) uint8
    end_timestamps_ms: np.ndarray  # (N,) int64
    feature_set: FeatureSet
    normalized: bool = False

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.end_timestamps_ms = np.asarray(self.end_timestamps_ms, dtype=np.int64)
        n = len(self.labels)
        if self.samples.shape != (n, WINDOW, self.feature_set.n_features):
            raise ValueError(
                f"samples shape {self.samples.shape} != ({n}, {WINDOW}, "
                f"{self.feature_set.n_features})")
        if self.end_timestamps_ms.shape != (n,):
            raise ValueError("one end timestamp per sample required")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> WindowDataset:
        return WindowDataset(self.samples[idx], self.labels[idx], self.end_timestamps_ms[idx],
                             self.feature_set, self.normalized)


def concat_datasets(parts: list[WindowDataset]) -> WindowDataset:
    if not parts:
        raise ValueError("nothing to concatenate")
    fs, norm = parts[0].feature_set, parts[0].normalized
    if any(p.feature_set is not fs or p.normalized != norm for p in parts):
        raise ValueError("datasets disagree on feature set or normalization")
    return WindowDataset(np.concatenate([p.samples for p in parts]),
                         np.concatenate([p.labels for p in parts]),
                         np.concatenate([p.end_timestamps_ms for p in parts]), fs, norm)


# --- per-frame statistics ----------------------------------------------------

def _row_mean(cols: np.ndarray) -> np.ndarray:
    acc = cols[:, 0].copy()
    for k in range(1, cols.shape[1]):
        acc += cols[:, k]
    return acc / cols.shape[1]


def _row_var(cols: np.ndarray, mean: np.ndarray) -> np.ndarray:
    dev = cols[:, 0] - mean
    acc = dev * dev
    for k in range(1, cols.shape[1]):
        dev = cols[:, k] - mean
        acc += dev * dev
    return acc / cols.shape[1]


def loo_differences(volumes: VolumeMatrix, primary: str):
    """Statistic over all badges minus the same statistic without ``primary``.

    Returns ``(mean_diff, std_diff, var_diff)`` per frame using population
    statistics.  Frames with any missing badge give NaN.
    """
    p = volumes.badge_index(primary)
    if len(volumes.badge_ids) < 2:
        raise ValueError("leave-one-out features need at least two badges")
    return _loo(volumes.values, p)


def _loo(allv: np.ndarray, p: int):
    others = np.delete(allv, p, axis=1)
    m_all = _row_mean(allv)
    m_oth = _row_mean(others)
    v_all = _row_var(allv, m_all)
    v_oth = _row_var(others, m_oth)
    return m_all - m_oth, np.sqrt(v_all) - np.sqrt(v_oth), v_all - v_oth


def _trailing_sums(values: np.ndarray, window: int) -> np.ndarray:
    n = len(values)
    padded = np.concatenate([np.zeros(window - 1), values])
    acc = padded[0:n].copy()
    for j in range(1, window):
        acc += padded[j:j + n]
    return acc


def rolling_mean(series, window: int = WINDOW) -> np.ndarray:
    """Trailing mean over the last ``window`` frames, expanding at the start.

    NaN frames stay NaN and the average restarts after them, so no value
    mixes frames from either side of a gap.
    """
    x = np.asarray(series, dtype=np.float64)
    out = np.full(x.shape, np.nan)
    for start, stop in _runs(np.isfinite(x)):
        out[start:stop] = _run_rolling_mean(x[start:stop], window)
    return out


def _run_rolling_mean(x: np.ndarray, window: int) -> np.ndarray:
    counts = np.minimum(np.arange(1, len(x) + 1), window)
    return _trailing_sums(x, window) / counts


def _runs(valid: np.ndarray) -> list[tuple[int, int]]:
    """Half-open index ranges of consecutive True values."""
    edges = np.diff(np.concatenate([[0], valid.astype(np.int8), [0]]))
    return list(zip(np.flatnonzero(edges == 1).tolist(), np.flatnonzero(edges == -1).tolist()))


def feature_columns(values: np.ndarray, primary_index: int, feature_set: FeatureSet) -> np.ndarray:
    """Raw per-frame feature rows for one gap-free run of volume rows."""
    vol = values[:, primary_index]
    if feature_set is FeatureSet.ONE_CHANNEL:
        return vol[:, None].copy()
    mean_d, std_d, var_d = _loo(values, primary_index)
    cols = [vol, _run_rolling_mean(mean_d, WINDOW), _run_rolling_mean(std_d, WINDOW)]
    if feature_set is FeatureSet.SET_A:
        cols.append(_run_rolling_mean(var_d, WINDOW))
    return np.stack(cols, axis=1)


def assemble_features(volumes: VolumeMatrix, primary: str, feature_set: FeatureSet) -> FeatureMatrix:
    p = volumes.badge_index(primary)
    if feature_set is not FeatureSet.ONE_CHANNEL and len(volumes.badge_ids) < 2:
        raise ValueError("leave-one-out features need at least two badges")
    if feature_set is FeatureSet.ONE_CHANNEL:
        valid = np.isfinite(volumes.values[:, p])
    else:
        valid = np.all(np.isfinite(volumes.values), axis=1)
    out = np.full((volumes.n_frames, feature_set.n_features), np.nan)
    for start, stop in _runs(valid):
        out[start:stop] = feature_columns(volumes.values[start:stop], p, feature_set)
    return FeatureMatrix(primary, volumes.t0_ms, feature_set.names, out)


# --- windows -----------------------------------------------------------------

def make_windows(features: FeatureMatrix, labels, window: int = WINDOW, stride: int = 1,
                 feature_set: FeatureSet | None = None) -> WindowDataset:
    """Slice every gap-free run into windows labelled by their final frame."""
    labels = np.asarray(labels)
    if labels.shape != (features.n_frames,):
        raise ValueError(f"labels length {labels.shape} != {features.n_frames} frames")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    fs = feature_set or _feature_set_from_names(features.feature_names)
    ends = []
    for start, stop in _runs(features.valid):
        ends.extend(range(start + window - 1, stop, stride))
    ends = np.asarray(ends, dtype=np.int64)
    F = features.values.shape[1]
    if ends.size:
        view = np.lib.stride_tricks.sliding_window_view(features.values, window, axis=0)
        samples = np.ascontiguousarray(view[ends - window + 1].transpose(0, 2, 1))
    else:
        samples = np.empty((0, window, F))
    ts = features.t0_ms + features.frame_ms * ends
    return WindowDataset(samples, labels[ends].astype(np.uint8), ts, fs, False)


def _feature_set_from_names(names) -> FeatureSet:
    for fs, fnames in FEATURE_NAMES.items():
        if tuple(names) == fnames:
            return fs
    raise ValueError(f"feature names {names} match no feature set")


def l2_normalize_windows(samples: np.ndarray) -> np.ndarray:
    """Scale each channel of each window to unit Euclidean norm over time."""
    sq = samples[:, 0, :] * samples[:, 0, :]
    for t in range(1, samples.shape[1]):
        sq += samples[:, t, :] * samples[:, t, :]
    norm = np.sqrt(sq)
    safe = np.where(norm > 0, norm, 1.0)
    return samples / safe[:, None, :]


def normalize_l2(dataset: WindowDataset) -> WindowDataset:
    if dataset.normalized:
        raise ValueError("dataset is already normalized")
    return WindowDataset(l2_normalize_windows(dataset.samples), dataset.labels.copy(),
                         dataset.end_timestamps_ms.copy(), dataset.feature_set, True)


def build_dataset(volumes: VolumeMatrix, labels: LabelMatrix, feature_set: FeatureSet,
                  normalized: bool = False, primaries=None, stride: int = 1) -> WindowDataset:
    """Windows for every primary badge in ``primaries`` (default: all), stacked."""
    primaries = list(volumes.badge_ids if primaries is None else primaries)
    parts = []
    for badge in primaries:
        fm = assemble_features(volumes, badge, feature_set)
        ds = make_windows(fm, labels.column(badge), stride=stride, feature_set=feature_set)
        parts.append(normalize_l2(ds) if normalized else ds)
    return concat_datasets(parts)


# --- binary container --------------------------------------------------------

_WD_MAGIC = b"BVWD"
_WD_VERSION = 1
_WD_HEADER = struct.Struct("<4sHBBQII")


class DatasetFormatError(ValueError):
    pass


def dump_dataset(ds: WindowDataset) -> bytes:
    """Serialize: header, then f64 samples, u8 labels, i64 timestamps (all LE)."""
    n, w, f = ds.samples.shape
    head = _WD_HEADER.pack(_WD_MAGIC, _WD_VERSION, _SET_CODES[ds.feature_set],
                           int(ds.normalized), n, f, w)
    return b"".join([head, ds.samples.astype("<f8").tobytes(),
                     ds.labels.astype("u1").tobytes(),
                     ds.end_timestamps_ms.astype("<i8").tobytes()])


def load_dataset(payload: bytes) -> WindowDataset:
    if len(payload) < _WD_HEADER.size:
        raise DatasetFormatError("truncated payload")
    magic, version, code, norm, n, f, w = _WD_HEADER.unpack_from(payload)
    if magic != _WD_MAGIC or version != _WD_VERSION:
        raise DatasetFormatError("version/magic mismatch")
    codes = {v: k for k, v in _SET_CODES.items()}
    if code not in codes or w != WINDOW:
        raise DatasetFormatError("unsupported feature set or window length")
    expected = _WD_HEADER.size + n * w * f * 8 + n + n * 8
    if len(payload) != expected:
        raise DatasetFormatError(
            "truncated payload" if len(payload) < expected else "trailing bytes after payload")
    off = _WD_HEADER.size
    samples = np.frombuffer(payload, "<f8", n * w * f, off).reshape(n, w, f).astype(np.float64)
    off += n * w * f * 8
    labels = np.frombuffer(payload, "u1", n, off).copy()
    off += n
    ts = np.frombuffer(payload, "<i8", n, off).astype(np.int64)
    return WindowDataset(samples, labels, ts, codes[code], bool(norm))
