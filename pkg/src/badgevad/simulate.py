"""Synthetic labelled meetings for badge amplitude streams.

Badges sit on a circle at least 1.2 m apart.  Each frame's amplitude at badge
``d`` is

    base_noise * J + sum over active speakers s of
        speech_gain * env_s(t) * S / dist(d, s) ** attenuation_exponent

where J and S are per-frame log-normal jitters, ``dist`` is clamped below at
1 m for other badges and fixed at 0.3 m for the speaker's own badge, and
``env_s`` is an on/off envelope with 100 ms raised-cosine ramps.  Labels are
exactly the scheduled speech intervals.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ingest import FRAME_MS, BadgeSampleRecord, LabelIntervals, format_labels, format_samples
from .nnkernel.rng import make_rng

CLAP_DURATION_S = 15.0
SELF_DISTANCE_M = 0.3
TURN_FRAMES = (40, 300)       # 2-15 s
GAP_FRAMES = (5, 40)          # 0.25-2 s
RAMP = np.array([0.25, 0.75])  # raised cosine sampled at two 50 ms frames


class Scenario(enum.Enum):
    NORMAL = "normal"
    ONE_ON_ONE = "1on1"
    ONE_ON_ONE_TV = "1on1_tv"

    @classmethod
    def parse(cls, text: str) -> Scenario:
        for s in cls:
            if text.strip().lower() in (s.value, s.name.lower()):
                return s
        raise ValueError(f"unknown scenario {text!r}; valid: {[s.value for s in cls]}")


@dataclass(frozen=True)
class Turn:
    speaker: int
    start_ms: int
    end_ms: int


@dataclass(frozen=True)
class SimConfig:
    n_badges: int = 6
    duration_s: float = 600.0
    seed: int = 0
    scenario: Scenario = Scenario.NORMAL
    base_noise: float = 1.0
    speech_gain: float = 2.0
    attenuation_exponent: float = 2.0
    clap: bool = True
    clap_onset_s: float = 5.0
    jitter_sigma: float = 0.2
    speech_jitter_sigma: float = 0.3
    speech_fraction: float = 0.6
    tv_gain: float = 2.0
    # (scenario, seconds) pieces played back to back; overrides ``scenario``
    segments: tuple[tuple[Scenario, float], ...] = ()
    start_ms: int = 1_600_000_000_000
    dropout: float = 0.0

    def __post_init__(self):
        if self.n_badges < 2:
            raise ValueError("need at least 2 badges")
        if not self.speech_gain > self.base_noise >= 0:
            raise ValueError("speech_gain must exceed base_noise >= 0")
        if self.attenuation_exponent <= 0:
            raise ValueError("attenuation_exponent must be positive")
        if self.speech_fraction != 0 and not 0.2 <= self.speech_fraction <= 0.7:
            raise ValueError("speech_fraction must be 0 (silent meeting) or lie in [0.2, 0.7]")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.segments and not math.isclose(sum(s for _, s in self.segments), self.duration_s):
            raise ValueError("segment durations must add up to duration_s")
        if self.clap and (self.clap_onset_s < 0
                          or self.clap_onset_s + CLAP_DURATION_S > self.duration_s):
            raise ValueError(
                f"duration {self.duration_s} s too short for a {CLAP_DURATION_S} s clap "
                f"at {self.clap_onset_s} s")

    @property
    def phases(self) -> tuple[tuple[Scenario, float], ...]:
        return self.segments or ((self.scenario, self.duration_s),)

    def to_json(self) -> dict:
        d = asdict(self)
        d["scenario"] = self.scenario.value
        d["segments"] = [[s.value, secs] for s, secs in self.segments]
        return d


@dataclass
class SimOutput:
    badge_ids: list[str]
    samples: list[BadgeSampleRecord]
    labels: LabelIntervals
    positions: dict[str, tuple[float, float]]
    schedule: list[Turn]
    clap_onset_ms: int | None
    phases: list[dict] = field(default_factory=list)
    config: SimConfig | None = None

    def samples_csv(self) -> str:
        return format_samples(self.samples)

    def labels_json(self) -> str:
        return format_labels(self.labels)

    def manifest(self) -> dict:
        return {
            "badge_ids": self.badge_ids,
            "positions": {b: list(p) for b, p in self.positions.items()},
            "schedule": [{"badge_id": self.badge_ids[t.speaker], "start_ms": t.start_ms,
                          "end_ms": t.end_ms} for t in self.schedule],
            "clap_onset_ms": self.clap_onset_ms,
            "phases": self.phases,
            "config": self.config.to_json() if self.config else None,
        }

    def manifest_json(self) -> str:
        return json.dumps(self.manifest(), indent=1, sort_keys=True) + "\n"


def badge_positions(n_badges: int) -> np.ndarray:
    """Points on a circle with 1.2 m between neighbours."""
    radius = 0.6 / math.sin(math.pi / n_badges)
    ang = 2.0 * np.pi * np.arange(n_badges) / n_badges
    return np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)


def _conversation(speakers: list[int], start_f: int, stop_f: int, fraction: float,
                  rng: np.random.Generator, alternate: bool) -> list[tuple[int, int, int]]:
    """Turns (speaker, start_frame, end_frame) filling ``fraction`` of the span."""
    span = stop_f - start_f
    target = int(round(fraction * span))
    lengths = []
    while sum(lengths) < target:
        lengths.append(int(rng.integers(TURN_FRAMES[0], TURN_FRAMES[1] + 1)))
    if not lengths:
        return []
    lengths[-1] -= sum(lengths) - target
    if lengths[-1] < TURN_FRAMES[0] and len(lengths) > 1:
        # fold a stub turn into earlier turns that still have room
        left = lengths.pop()
        for k in range(len(lengths) - 1, -1, -1):
            take = min(left, TURN_FRAMES[1] - lengths[k])
            lengths[k] += take
            left -= take
        if left:
            lengths.append(max(left, TURN_FRAMES[0]))
    elif lengths[-1] < TURN_FRAMES[0]:
        lengths[-1] = TURN_FRAMES[0]
    n = len(lengths)
    gaps = rng.integers(GAP_FRAMES[0], GAP_FRAMES[1] + 1, size=max(n - 1, 0))
    spare = span - sum(lengths) - int(gaps.sum())
    if spare < 0:
        # short span: shrink gaps toward the 250 ms floor
        gaps = np.full(max(n - 1, 0), GAP_FRAMES[0])
        spare = span - sum(lengths) - int(gaps.sum())
        if spare < 0:
            return []
    # leftover silence spread over leading, between-turn and trailing slots
    extra = rng.multinomial(spare, rng.dirichlet(np.ones(n + 1)))
    turns = []
    t = start_f + int(extra[0])
    prev = None
    for k, length in enumerate(lengths):
        if alternate:
            who = speakers[k % len(speakers)]
        else:
            choices = [s for s in speakers if s != prev] or speakers
            who = choices[int(rng.integers(len(choices)))]
        turns.append((who, t, t + length))
        prev = who
        if k < n - 1:
            t += length + int(gaps[k]) + int(extra[k + 1])
    return turns


def scenario_schedule(scenario: Scenario, n_badges: int, duration_s: float,
                      rng: np.random.Generator, speech_fraction: float = 0.6,
                      start_ms: int = 0) -> list[Turn]:
    """Speaker turns for one scenario over ``[start_ms, start_ms + duration)``.

    NORMAL has one speaker at a time.  The 1-on-1 scenarios pair badges
    (0,1), (2,3), ... into concurrent dialogues with alternating turns; an odd
    badge out only listens.
    """
    if n_badges < 2:
        raise ValueError("need at least 2 badges")
    frames = int(round(duration_s * 1000 / FRAME_MS))
    if speech_fraction == 0:
        return []
    if scenario is Scenario.NORMAL:
        raw = _conversation(list(range(n_badges)), 0, frames, speech_fraction, rng, False)
    else:
        raw = []
        for a in range(0, n_badges - 1, 2):
            raw += _conversation([a, a + 1], 0, frames, speech_fraction, rng, True)
    turns = [Turn(s, start_ms + a * FRAME_MS, start_ms + b * FRAME_MS) for s, a, b in raw]
    return sorted(turns, key=lambda t: (t.start_ms, t.speaker))


def _envelope(n_frames: int, a: int, b: int) -> np.ndarray:
    env = np.zeros(n_frames)
    env[a:b] = 1.0
    k = min(len(RAMP), (b - a) // 2)
    if k:
        env[a:a + k] = RAMP[:k]
        env[b - k:b] = RAMP[:k][::-1]
    return env


def simulate_meeting(config: SimConfig) -> SimOutput:
    rng = make_rng(config.seed)
    n = config.n_badges
    badge_ids = [f"B{k + 1}" for k in range(n)]
    pos = badge_positions(n)
    T = int(round(config.duration_s * 1000 / FRAME_MS))
    a = config.attenuation_exponent

    dist = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1))
    gain = 1.0 / np.maximum(1.0, dist) ** a
    np.fill_diagonal(gain, 1.0 / SELF_DISTANCE_M ** a)

    clap_f = None
    if config.clap:
        clap_f = int(round(config.clap_onset_s * 1000 / FRAME_MS))
        clap_stop = clap_f + int(CLAP_DURATION_S * 1000 / FRAME_MS)
        clap_guard = clap_stop + 1000 // FRAME_MS

    schedule: list[Turn] = []
    phases = []
    tv_on = np.zeros(T, dtype=bool)
    seg_start = 0
    for scen, secs in config.phases:
        seg_stop = min(T, seg_start + int(round(secs * 1000 / FRAME_MS)))
        phases.append({"name": scen.value, "start_ms": config.start_ms + seg_start * FRAME_MS,
                       "end_ms": config.start_ms + seg_stop * FRAME_MS})
        if scen is Scenario.ONE_ON_ONE_TV:
            tv_on[seg_start:seg_stop] = True
        pieces = [(seg_start, seg_stop)]
        if clap_f is not None and clap_f < seg_stop and clap_guard > seg_start:
            pieces = [(seg_start, clap_f), (clap_guard, seg_stop)]
        for p0, p1 in pieces:
            if p1 - p0 < TURN_FRAMES[0] * 2:
                continue
            schedule += scenario_schedule(scen, n, (p1 - p0) * FRAME_MS / 1000, rng,
                                          config.speech_fraction,
                                          config.start_ms + p0 * FRAME_MS)
        seg_start = seg_stop
    schedule.sort(key=lambda t: (t.start_ms, t.speaker))

    speech = np.zeros((T, n))  # per-speaker envelope
    for turn in schedule:
        f0 = (turn.start_ms - config.start_ms) // FRAME_MS
        f1 = (turn.end_ms - config.start_ms) // FRAME_MS
        speech[:, turn.speaker] = np.maximum(speech[:, turn.speaker], _envelope(T, f0, f1))

    noise_j = np.exp(config.jitter_sigma * rng.standard_normal((T, n)))
    speech_j = np.exp(config.speech_jitter_sigma * rng.standard_normal((T, n)))
    amp = config.base_noise * noise_j + config.speech_gain * (speech * speech_j) @ gain.T

    if tv_on.any():
        radius = float(np.linalg.norm(pos[0]))
        tv_pos = np.array([radius + 2.0, 0.0])
        tv_gain = 1.0 / np.maximum(1.0, np.linalg.norm(pos - tv_pos, axis=1)) ** a
        tv_mod = np.exp(0.5 * rng.standard_normal(T)) * tv_on
        amp += config.tv_gain * tv_mod[:, None] * tv_gain[None, :]

    clap_onset_ms = None
    if clap_f is not None:
        level = 2.0 * config.speech_gain / SELF_DISTANCE_M ** a
        burst = level * np.exp(config.jitter_sigma * rng.standard_normal((clap_stop - clap_f, n)))
        amp[clap_f:clap_stop] += burst
        clap_onset_ms = config.start_ms + clap_f * FRAME_MS

    keep = np.ones((T, n), dtype=bool)
    if config.dropout > 0:
        keep = rng.random((T, n)) >= config.dropout

    samples = [BadgeSampleRecord(badge_ids[d], config.start_ms + t * FRAME_MS, float(amp[t, d]))
               for d in range(n) for t in np.flatnonzero(keep[:, d]).tolist()]

    labels: LabelIntervals = {b: [] for b in badge_ids}
    for turn in schedule:
        labels[badge_ids[turn.speaker]].append((turn.start_ms, turn.end_ms))

    return SimOutput(
        badge_ids=badge_ids,
        samples=samples,
        labels=labels,
        positions={b: (float(pos[k, 0]), float(pos[k, 1])) for k, b in enumerate(badge_ids)},
        schedule=schedule,
        clap_onset_ms=clap_onset_ms,
        phases=phases,
        config=config,
    )
