"""Cross-validated model selection over architecture x features x normalization."""
from __future__ import annotations

import csv
import io
import itertools
import multiprocessing
from collections.abc import Callable, Mapping
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..features import FeatureSet, WindowDataset
from ..models import Arch, ArchSpec, build_model, forward
from .crossval import class_weights, stratified_kfold
from .metrics import balanced_accuracy
from .training import train

SWEEP_FEATURE_SETS = (FeatureSet.SET_A, FeatureSet.SET_B)
SWEEP_NORMALIZATION = (False, True)
REPORT_COLUMNS = ("arch", "feature_set", "normalized", "cv_val_score", "cv_train_score")


@dataclass(frozen=True)
class SweepRow:
    arch: Arch
    feature_set: FeatureSet
    normalized: bool
    val_scores: tuple[float, ...]
    train_scores: tuple[float, ...]

    @property
    def mean_val_balanced_accuracy(self) -> float:
        return float(np.mean(self.val_scores))

    @property
    def mean_train_binary_accuracy(self) -> float:
        return float(np.mean(self.train_scores))


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[SweepRow, ...]
    selected: int

    @property
    def best(self) -> SweepRow:
        return self.rows[self.selected]

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow([r.arch.value, r.feature_set.value, "L2" if r.normalized else "No",
                        repr(r.mean_val_balanced_accuracy), repr(r.mean_train_binary_accuracy)])
        return out.getvalue()

    def selected_config(self) -> dict:
        b = self.best
        return {"arch": b.arch.value, "feature_set": b.feature_set.value,
                "normalized": b.normalized, "cv_val_score": b.mean_val_balanced_accuracy,
                "cv_train_score": b.mean_train_binary_accuracy}


def grid(archs=tuple(Arch), feature_sets=SWEEP_FEATURE_SETS,
         normalizations=SWEEP_NORMALIZATION) -> list[tuple[Arch, FeatureSet, bool]]:
    return list(itertools.product(archs, feature_sets, normalizations))


def derived_seed(seed: int, *stream: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(stream))
    return int(ss.generate_state(2, np.uint64)[0] >> np.uint64(1))


def selection_key(row: SweepRow, arch_order=tuple(Arch)):
    """Higher score first; ties prefer fewer features, no normalization, list order."""
    return (-row.mean_val_balanced_accuracy, row.feature_set.n_features, row.normalized,
            arch_order.index(row.arch))


# worker state for process pools; set by _init_worker
_DATASETS: dict = {}


def _init_worker(datasets):
    global _DATASETS
    _DATASETS = datasets


def _run_fold(task):
    (row, fold, arch, fs, norm, train_idx, val_idx, seed, epochs, batch_size, lr) = task
    ds = _DATASETS[(fs, norm)]
    train_ds = ds.subset(train_idx)
    val_ds = ds.subset(val_idx)
    model = build_model(ArchSpec(arch, fs, norm, derived_seed(seed, row, fold, 0)))
    hist = train(model, train_ds, epochs=epochs, batch_size=batch_size,
                 weights=class_weights(train_ds.labels), seed=derived_seed(seed, row, fold, 1),
                 lr=lr)
    probs = forward(model, val_ds.samples, exact=False)
    return row, fold, balanced_accuracy(probs, val_ds.labels), hist.accuracy[-1]


def crossval_sweep(datasets: Mapping[tuple[FeatureSet, bool], WindowDataset]
                   | Callable[[FeatureSet, bool], WindowDataset],
                   k: int = 5, seed: int = 0, epochs: int = 15, batch_size: int = 4000,
                   lr: float = 1e-3, archs=tuple(Arch), feature_sets=SWEEP_FEATURE_SETS,
                   normalizations=SWEEP_NORMALIZATION, jobs: int = 1,
                   progress: Callable[[str], None] | None = None) -> SweepReport:
    """Score every grid row by stratified k-fold cross-validation.

    ``datasets`` maps ``(feature_set, normalized)`` to windows cut from the same
    stream, so labels and window order agree across rows; folds are drawn once
    and shared.  Each (row, fold) trains a fresh model with class weights from
    its own training split and seeds derived from ``(seed, row, fold)``, so
    ``jobs > 1`` reproduces the sequential result exactly.
    """
    cells = grid(archs, feature_sets, normalizations)
    need = sorted({(fs, norm) for _, fs, norm in cells}, key=lambda t: (t[0].value, t[1]))
    if callable(datasets):
        data = {key: datasets(*key) for key in need}
    else:
        data = {key: datasets[key] for key in need}
    labels = data[need[0]].labels
    for key in need:
        if not np.array_equal(data[key].labels, labels):
            raise ValueError("all sweep datasets must share window labels and order")
    folds = stratified_kfold(labels, k, seed)
    all_idx = np.arange(len(labels))

    tasks = []
    for row, (arch, fs, norm) in enumerate(cells):
        for f, val_idx in enumerate(folds):
            train_idx = np.setdiff1d(all_idx, val_idx)
            tasks.append((row, f, arch, fs, norm, train_idx, val_idx, seed, epochs,
                          batch_size, lr))

    results = {}
    if jobs <= 1:
        _init_worker(data)
        for t in tasks:
            r, f, val, tr = _run_fold(t)
            results[r, f] = (val, tr)
            if progress:
                progress(f"row {r} fold {f}: val {val:.4f} train {tr:.4f}")
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(jobs, mp_context=ctx, initializer=_init_worker,
                                 initargs=(data,)) as pool:
            for r, f, val, tr in pool.map(_run_fold, tasks):
                results[r, f] = (val, tr)
                if progress:
                    progress(f"row {r} fold {f}: val {val:.4f} train {tr:.4f}")

    rows = tuple(
        SweepRow(arch, fs, norm,
                 tuple(results[r, f][0] for f in range(k)),
                 tuple(results[r, f][1] for f in range(k)))
        for r, (arch, fs, norm) in enumerate(cells))
    arch_order = tuple(archs)
    selected = min(range(len(rows)), key=lambda i: selection_key(rows[i], arch_order))
    return SweepReport(rows, selected)
