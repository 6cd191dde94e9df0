"""Command-line entry point: ``badgevad <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 internal
error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import features, ingest, models, simulate
from .features import FeatureSet
from .models import Arch, ArchSpec
from .pipeline import (crossval_sweep, decisions_csv, evaluate_phases, parse_phases,
                       predict_stream, read_table, replay_frames, train_to_convergence,
                       verify_metrics)
from .pipeline.evaluation import SCORE_TOLERANCE

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

DATA_ERRORS = (ingest.ParseError, ingest.ValidationError, ingest.NoSpikeFound,
               features.DatasetFormatError, models.ModelFormatError, FileNotFoundError,
               json.JSONDecodeError, KeyError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _threshold(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("threshold must lie in [0, 1]")
    return v


def _choice_parser(enum_cls, label):
    def parse(text):
        try:
            return enum_cls.parse(text)
        except ValueError:
            valid = ", ".join(m.value for m in enum_cls)
            raise argparse.ArgumentTypeError(f"unknown {label} {text!r}; valid: {valid}") from None
    return parse


def _norm(text: str) -> bool:
    t = text.strip().lower()
    if t in ("l2", "yes", "true", "1"):
        return True
    if t in ("no", "none", "false", "0"):
        return False
    raise argparse.ArgumentTypeError(f"unknown normalization {text!r}; valid: L2, No")


def _segments(text: str):
    out = []
    for piece in text.split(","):
        name, _, secs = piece.partition(":")
        try:
            out.append((simulate.Scenario.parse(name), float(secs)))
        except ValueError as e:
            raise argparse.ArgumentTypeError(f"bad segment {piece!r}: {e}") from None
    return tuple(out)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="badgevad", description="Voice activity detection for badge amplitude data.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def recording(sp, multi=False):
        nargs = "+" if multi else None
        sp.add_argument("--samples", required=True, nargs=nargs, type=Path,
                        help="samples CSV (timestamp_ms,badge_id,amplitude)")
        sp.add_argument("--labels", required=True, nargs=nargs, type=Path, help="labels JSON")
        sp.add_argument("--sync-ms", type=int, nargs=nargs,
                        help="declared sync spike onset; checked against the detected spike")

    def model_flags(sp, required=True):
        sp.add_argument("--arch", type=_choice_parser(Arch, "architecture"), required=required)
        sp.add_argument("--feature-set", type=_choice_parser(FeatureSet, "feature set"),
                        required=required)
        sp.add_argument("--norm", type=_norm, default=False, help="L2 or No (default No)")

    s = sub.add_parser("simulate", help="generate a labelled synthetic meeting")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out-dir", type=Path, required=True)
    s.add_argument("--badges", type=_positive_int, default=6)
    s.add_argument("--duration", type=float, default=600.0, help="seconds")
    s.add_argument("--scenario", type=_choice_parser(simulate.Scenario, "scenario"),
                   default=simulate.Scenario.NORMAL)
    s.add_argument("--segments", type=_segments, default=(),
                   help="e.g. normal:600,1on1:600 (overrides --scenario)")
    s.add_argument("--dropout", type=float, default=0.0)
    s.add_argument("--no-clap", action="store_true")

    s = sub.add_parser("features", help="cut a recording into a window dataset")
    recording(s)
    s.add_argument("--feature-set", type=_choice_parser(FeatureSet, "feature set"), required=True)
    s.add_argument("--norm", type=_norm, default=False)
    s.add_argument("--primary", nargs="+")
    s.add_argument("--stride", type=_positive_int, default=1)
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("crossval", help="16-row architecture/feature/normalization sweep")
    recording(s, multi=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--folds", type=_positive_int, default=5)
    s.add_argument("--epochs", type=_positive_int, default=15)
    s.add_argument("--batch-size", type=_positive_int, default=4000)
    s.add_argument("--stride", type=_positive_int, default=1)
    s.add_argument("--primary", nargs="+")
    s.add_argument("--jobs", type=_positive_int, default=1)
    s.add_argument("--out", type=Path, required=True, help="report CSV")
    s.add_argument("--selected", type=Path, required=True, help="selected-config JSON")

    s = sub.add_parser("train", help="train one configuration until accuracy converges")
    recording(s, multi=True)
    s.add_argument("--seed", type=int, required=True)
    model_flags(s, required=False)
    s.add_argument("--config", type=Path, help="selected-config JSON from crossval")
    s.add_argument("--batch-size", type=_positive_int, default=4000)
    s.add_argument("--max-epochs", type=_positive_int, default=200)
    s.add_argument("--patience", type=_positive_int, default=5)
    s.add_argument("--stride", type=_positive_int, default=1)
    s.add_argument("--primary", nargs="+")
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("evaluate", help="per-phase confusion matrices and scores")
    recording(s)
    s.add_argument("--model", type=Path, required=True)
    s.add_argument("--phases", type=Path, required=True, help="phase annotation JSON")
    s.add_argument("--primary", nargs="+")
    s.add_argument("--threshold", type=_threshold, default=0.5)
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("predict", help="causal per-frame predictions from a replayed recording")
    s.add_argument("--model", type=Path, required=True)
    s.add_argument("--samples", type=Path, required=True)
    s.add_argument("--primary", nargs="+")
    s.add_argument("--threshold", type=_threshold, default=0.5)
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("verify-metrics", help="recompute scores from confusion counts")
    s.add_argument("--confusion", type=Path, required=True)
    s.add_argument("--metrics", type=Path, required=True)
    s.add_argument("--tolerance", type=float, default=SCORE_TOLERANCE)
    return p


# --- helpers -----------------------------------------------------------------

def _load_recording(samples: Path, labels: Path, sync_ms: int | None = None):
    vm = ingest.pivot_volumes(ingest.parse_samples(samples.read_bytes()))
    lm = ingest.rasterize_labels(ingest.parse_labels(labels.read_bytes()), vm)
    detected = ingest.detect_sync_spike(vm) if sync_ms is not None else None
    report = ingest.validate_alignment(vm, lm, detected, sync_ms)
    if not report.ok:
        raise ingest.ValidationError(f"{samples}: {report}")
    return vm, lm


def _recordings(args):
    syncs = args.sync_ms or [None] * len(args.samples)
    if len(args.labels) != len(args.samples) or len(syncs) != len(args.samples):
        raise UsageError("--samples, --labels and --sync-ms need the same number of paths")
    return [_load_recording(s, l, m) for s, l, m in zip(args.samples, args.labels, syncs)]


def _windows(recs, fs, norm, primaries, stride):
    return features.concat_datasets(
        [features.build_dataset(vm, lm, fs, norm, primaries, stride) for vm, lm in recs])


def _write(path: Path, text: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(text, bytes):
        path.write_bytes(text)
    else:
        path.write_text(text, newline="")


# --- subcommands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = simulate.SimConfig(n_badges=args.badges, duration_s=args.duration, seed=args.seed,
                             scenario=args.scenario, segments=args.segments,
                             dropout=args.dropout, clap=not args.no_clap)
    out = simulate.simulate_meeting(cfg)
    _write(args.out_dir / "samples.csv", out.samples_csv())
    _write(args.out_dir / "labels.json", out.labels_json())
    _write(args.out_dir / "manifest.json", out.manifest_json())
    _write(args.out_dir / "phases.json", json.dumps(out.phases, indent=1) + "\n")
    return EXIT_OK


def cmd_features(args) -> int:
    vm, lm = _load_recording(args.samples, args.labels, args.sync_ms)
    ds = features.build_dataset(vm, lm, args.feature_set, args.norm, args.primary, args.stride)
    _write(args.out, features.dump_dataset(ds))
    print(f"{len(ds)} windows, {int(ds.labels.sum())} positive", file=sys.stderr)
    return EXIT_OK


def cmd_crossval(args) -> int:
    recs = _recordings(args)
    cache = {}

    def datasets(fs, norm):
        if fs not in cache:
            cache[fs] = _windows(recs, fs, False, args.primary, args.stride)
        return features.normalize_l2(cache[fs]) if norm else cache[fs]

    report = crossval_sweep(datasets, k=args.folds, seed=args.seed, epochs=args.epochs,
                            batch_size=args.batch_size, jobs=args.jobs,
                            progress=lambda m: print(m, file=sys.stderr))
    _write(args.out, report.to_csv())
    _write(args.selected, json.dumps(report.selected_config(), indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_train(args) -> int:
    arch, fs, norm = args.arch, args.feature_set, args.norm
    if args.config is not None:
        cfg = json.loads(args.config.read_text())
        arch, fs = Arch.parse(cfg["arch"]), FeatureSet.parse(cfg["feature_set"])
        norm = bool(cfg["normalized"])
    if arch is None or fs is None:
        raise UsageError("train needs --arch and --feature-set, or --config")
    recs = _recordings(args)
    ds = _windows(recs, fs, norm, args.primary, args.stride)
    model = models.build_model(ArchSpec(arch, fs, norm, args.seed))
    train_to_convergence(model, ds, seed=args.seed, patience=args.patience,
                         max_epochs=args.max_epochs, batch_size=args.batch_size)
    model.metadata["n_windows"] = len(ds)
    _write(args.out, models.save(model))
    print(f"trained {arch.value}/{fs.value}/{'L2' if norm else 'No'} for "
          f"{model.metadata['epochs_run']} epochs, best {model.metadata['best_epoch']}",
          file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = models.load_file(args.model)
    vm, lm = _load_recording(args.samples, args.labels, args.sync_ms)
    subjects = args.primary or list(vm.badge_ids)
    phases = parse_phases(args.phases.read_bytes(), subjects)
    fs, norm = model.spec.feature_set, model.spec.normalized
    windows = {s: features.build_dataset(vm, lm, fs, norm, [s]) for s in subjects}
    table = evaluate_phases(model, windows, phases, subjects, args.threshold)
    _write(args.out, table.to_csv())
    return EXIT_OK


def cmd_predict(args) -> int:
    model = models.load_file(args.model)
    vm = ingest.pivot_volumes(ingest.parse_samples(args.samples.read_bytes()))
    decisions = predict_stream(model, replay_frames(vm), vm.badge_ids, args.primary,
                               args.threshold)
    _write(args.out, decisions_csv(decisions))
    if decisions:
        worst = max(d.latency_s for d in decisions)
        print(f"{len(decisions)} decisions, max emission latency {worst:.3f} s", file=sys.stderr)
    return EXIT_OK


def cmd_verify_metrics(args) -> int:
    checks = verify_metrics(read_table(args.confusion.read_text()),
                            read_table(args.metrics.read_text()), args.tolerance)
    bad = [c for c in checks if not c.ok]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["scenario", "subject", "metric", "reported", "computed", "status"])
    for c in checks:
        w.writerow([c.scenario, c.subject, c.metric, repr(c.reported), repr(c.computed),
                    "ok" if c.ok else "mismatch"])
    print(f"{len(checks) - len(bad)}/{len(checks)} values agree within {args.tolerance}",
          file=sys.stderr)
    return EXIT_OK if not bad else EXIT_DATA


COMMANDS = {
    "simulate": cmd_simulate, "features": cmd_features, "crossval": cmd_crossval,
    "train": cmd_train, "evaluate": cmd_evaluate, "predict": cmd_predict,
    "verify-metrics": cmd_verify_metrics,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
