"""Phase-wise test evaluation and recomputation checks on score tables."""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from ..features import WindowDataset
from ..models import TrainedModel, forward
from .metrics import ConfusionMatrix, MetricsRow, UndefinedMetricError, confusion, metrics

OVERALL = "Overall"
WHOLE = "Whole meeting"
BETWEEN = "between_phases"
TABLE_COLUMNS = ("scenario", "subject", "balanced_accuracy", "f1", "tn", "fp", "fn", "tp")
SCORE_TOLERANCE = 0.0005


@dataclass(frozen=True)
class PhaseInterval:
    name: str
    start_ms: int
    end_ms: int


PhaseAnnotation = Mapping[str, list[PhaseInterval]]


def parse_phases(payload: bytes | str, subjects=None) -> dict[str, list[PhaseInterval]]:
    """Read phase JSON: either ``{subject: [...]}`` or one array for all subjects."""
    doc = json.loads(payload)
    if isinstance(doc, list):
        if subjects is None:
            raise ValueError("a bare phase array needs an explicit subject list")
        doc = {s: doc for s in subjects}
    out = {}
    for subject, items in doc.items():
        spans = [PhaseInterval(str(i["name"]), int(i["start_ms"]), int(i["end_ms"]))
                 for i in items]
        ordered = sorted(spans, key=lambda p: p.start_ms)
        for a, b in zip(ordered, ordered[1:]):
            if b.start_ms < a.end_ms:
                raise ValueError(f"phases {a.name!r} and {b.name!r} overlap for {subject}")
        out[subject] = spans
    return out


@dataclass(frozen=True)
class EvalRow:
    scenario: str
    subject: str
    cm: ConfusionMatrix
    scores: MetricsRow | None  # None when a class is absent from the cell


@dataclass
class EvaluationTable:
    rows: list[EvalRow]

    def get(self, scenario: str, subject: str) -> EvalRow:
        for r in self.rows:
            if r.scenario == scenario and r.subject == subject:
                return r
        raise KeyError((scenario, subject))

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r in self.rows:
            ba = repr(r.scores.balanced_accuracy) if r.scores else "nan"
            f1 = repr(r.scores.f1) if r.scores else "nan"
            w.writerow([r.scenario, r.subject, ba, f1, r.cm.tn, r.cm.fp, r.cm.fn, r.cm.tp])
        return out.getvalue()


def _row(scenario: str, subject: str, cm: ConfusionMatrix) -> EvalRow:
    try:
        scores = metrics(cm)
    except UndefinedMetricError:
        warnings.warn(f"{scenario}/{subject}: balanced accuracy undefined for {cm}", stacklevel=3)
        scores = None
    return EvalRow(scenario, subject, cm, scores)


def evaluate_phases(model: TrainedModel, windows: Mapping[str, WindowDataset],
                    phases: PhaseAnnotation, subjects=None, threshold: float = 0.5,
                    probabilities: Mapping[str, np.ndarray] | None = None) -> EvaluationTable:
    """Confusion matrices and scores per (phase, subject), pooled per phase.

    A window belongs to the phase whose ``[start, end)`` holds its end
    timestamp; windows outside every phase go to ``between_phases``.  Phases
    without windows are dropped with a warning.  The last block, "Whole
    meeting", covers every window of each subject.
    """
    subjects = list(windows) if subjects is None else list(subjects)
    phase_names: list[str] = []
    for s in subjects:
        for p in phases.get(s, []):
            if p.name not in phase_names:
                phase_names.append(p.name)

    cells: dict[tuple[str, str], ConfusionMatrix] = {}
    whole: dict[str, ConfusionMatrix] = {}
    for s in subjects:
        ds = windows[s]
        probs = probabilities[s] if probabilities is not None else forward(model, ds.samples)
        assigned = np.full(len(ds), -1)
        for k, name in enumerate(phase_names):
            for p in phases.get(s, []):
                if p.name == name:
                    inside = (ds.end_timestamps_ms >= p.start_ms) & (ds.end_timestamps_ms < p.end_ms)
                    assigned[inside & (assigned < 0)] = k
        for k, name in enumerate(phase_names + [BETWEEN]):
            sel = assigned == (k if name != BETWEEN else -1)
            if np.any(sel):
                cells[name, s] = confusion(probs[sel], ds.labels[sel], threshold)
        whole[s] = confusion(probs, ds.labels, threshold)

    rows: list[EvalRow] = []
    for name in phase_names + [BETWEEN]:
        present = [s for s in subjects if (name, s) in cells]
        if not present:
            if name != BETWEEN:
                warnings.warn(f"phase {name!r} has no windows; row omitted", stacklevel=2)
            continue
        for s in present:
            rows.append(_row(name, s, cells[name, s]))
        rows.append(_row(name, OVERALL, _sum(cells[name, s] for s in present)))
    for s in subjects:
        rows.append(_row(WHOLE, s, whole[s]))
    rows.append(_row(WHOLE, OVERALL, _sum(whole.values())))
    return EvaluationTable(rows)


def _sum(cms) -> ConfusionMatrix:
    cms = list(cms)
    total = cms[0]
    for cm in cms[1:]:
        total = total + cm
    return total


# --- recomputation check ----------------------------------------------------

@dataclass(frozen=True)
class MetricCheck:
    scenario: str
    subject: str
    metric: str
    reported: float
    computed: float
    ok: bool


def read_table(payload: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(payload)))


def verify_metrics(confusion_rows: list[dict], metric_rows: list[dict],
                   tolerance: float = SCORE_TOLERANCE) -> list[MetricCheck]:
    """Recompute reported scores from confusion counts.

    ``confusion_rows`` need scenario, subject, tn, fp, fn, tp;
    ``metric_rows`` need scenario, subject, balanced_accuracy, f1.  An
    ``Overall`` metric row without its own counts is checked against the
    pooled counts of that scenario's other subjects.
    """
    cms: dict[tuple[str, str], ConfusionMatrix] = {}
    for r in confusion_rows:
        cms[r["scenario"], r["subject"]] = ConfusionMatrix(
            int(r["tn"]), int(r["fp"]), int(r["fn"]), int(r["tp"]))
    checks = []
    for r in metric_rows:
        key = (r["scenario"], r["subject"])
        cm = cms.get(key)
        if cm is None and r["subject"] == OVERALL:
            parts = [v for (sc, su), v in cms.items() if sc == r["scenario"] and su != OVERALL]
            cm = _sum(parts) if parts else None
        if cm is None:
            raise KeyError(f"no confusion counts for {key}")
        try:
            scores = metrics(cm)
            computed = {"balanced_accuracy": scores.balanced_accuracy, "f1": scores.f1}
        except UndefinedMetricError:
            computed = {"balanced_accuracy": math.nan, "f1": math.nan}
        for name in ("balanced_accuracy", "f1"):
            reported = float(r[name])
            value = computed[name]
            if math.isnan(reported) or math.isnan(value):
                ok = math.isnan(reported) and math.isnan(value)
            else:
                ok = abs(reported - value) <= tolerance + 1e-12
            checks.append(MetricCheck(r["scenario"], r["subject"], name, reported, value, ok))
    return checks
