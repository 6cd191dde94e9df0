import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from badgevad.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, build_parser, main
from badgevad.models import load_file

DATA = Path(__file__).parent / "data"


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--seed", 7, "--out-dir", out, "--badges", 3, "--duration", 90,
               "--segments", "normal:45,1on1_tv:45") == EXIT_OK
    return out


def test_simulate_outputs_are_byte_identical(sim, tmp_path):
    assert run("simulate", "--seed", 7, "--out-dir", tmp_path, "--badges", 3, "--duration", 90,
               "--segments", "normal:45,1on1_tv:45") == EXIT_OK
    for name in ("samples.csv", "labels.json", "manifest.json", "phases.json"):
        assert (tmp_path / name).read_bytes() == (sim / name).read_bytes()


def test_defaults():
    args = build_parser().parse_args(["crossval", "--samples", "s", "--labels", "l", "--seed", "1",
                                      "--out", "o", "--selected", "j"])
    assert (args.epochs, args.batch_size, args.jobs, args.folds) == (15, 4000, 1, 5)
    args = build_parser().parse_args(["predict", "--model", "m", "--samples", "s", "--out", "o"])
    assert args.threshold == 0.5


@pytest.mark.parametrize("argv", [
    ["features", "--samples", "s", "--labels", "l", "--feature-set", "C", "--out", "o"],
    ["crossval", "--samples", "s", "--labels", "l", "--seed", "1", "--epochs", "0",
     "--out", "o", "--selected", "j"],
    ["simulate", "--out-dir", "x"],  # seed is mandatory
    ["train", "--samples", "s", "--labels", "l", "--seed", "1", "--arch", "GRU", "--out", "o"],
    ["bogus"],
    [],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_feature_set_error_lists_valid_values(capsys):
    main(["features", "--samples", "s", "--labels", "l", "--feature-set", "C", "--out", "o"])
    assert "valid: 1, A, B" in capsys.readouterr().err


def test_data_errors(sim, tmp_path):
    assert run("features", "--samples", tmp_path / "missing.csv", "--labels", sim / "labels.json",
               "--feature-set", "B", "--out", tmp_path / "w.bvwd") == EXIT_DATA
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp_ms,badge_id,amplitude\n1000,B1,-1\n")
    assert run("features", "--samples", bad, "--labels", sim / "labels.json",
               "--feature-set", "B", "--out", tmp_path / "w.bvwd") == EXIT_DATA
    # declared sync spike far from the detected one
    onset = json.loads((sim / "manifest.json").read_text())["clap_onset_ms"]
    assert run("features", "--samples", sim / "samples.csv", "--labels", sim / "labels.json",
               "--sync-ms", onset + 5000, "--feature-set", "B",
               "--out", tmp_path / "w.bvwd") == EXIT_DATA
    assert run("features", "--samples", sim / "samples.csv", "--labels", sim / "labels.json",
               "--sync-ms", onset, "--feature-set", "B", "--out", tmp_path / "w.bvwd") == EXIT_OK


def test_pipeline_round_trip(sim, tmp_path):
    rec = ["--samples", sim / "samples.csv", "--labels", sim / "labels.json"]
    assert run("crossval", *rec, "--seed", 3, "--epochs", 1, "--batch-size", 16,
               "--stride", 100, "--folds", 2, "--out", tmp_path / "sweep.csv",
               "--selected", tmp_path / "sel.json") == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert len(rows) == 16
    assert list(rows[0]) == ["arch", "feature_set", "normalized", "cv_val_score", "cv_train_score"]
    sel = json.loads((tmp_path / "sel.json").read_text())

    train_args = [*rec, "--seed", 3, "--config", tmp_path / "sel.json", "--batch-size", 64,
                  "--stride", 25, "--max-epochs", 2]
    assert run("train", *train_args, "--out", tmp_path / "m.bvm") == EXIT_OK
    assert run("train", *train_args, "--out", tmp_path / "m2.bvm") == EXIT_OK
    assert (tmp_path / "m.bvm").read_bytes() == (tmp_path / "m2.bvm").read_bytes()
    assert load_file(tmp_path / "m.bvm").spec.arch.value == sel["arch"]

    assert run("evaluate", *rec, "--model", tmp_path / "m.bvm", "--phases", sim / "phases.json",
               "--out", tmp_path / "eval.csv") == EXIT_OK
    table = list(csv.DictReader((tmp_path / "eval.csv").open()))
    assert {r["scenario"] for r in table} >= {"normal", "1on1_tv", "Whole meeting"}
    assert run("verify-metrics", "--confusion", tmp_path / "eval.csv",
               "--metrics", tmp_path / "eval.csv") == EXIT_OK

    for name in ("p1.csv", "p2.csv"):
        assert run("predict", "--model", tmp_path / "m.bvm", "--samples", sim / "samples.csv",
                   "--primary", "B2", "--out", tmp_path / name) == EXIT_OK
    assert (tmp_path / "p1.csv").read_bytes() == (tmp_path / "p2.csv").read_bytes()
    lines = (tmp_path / "p1.csv").read_text().splitlines()
    assert lines[0] == "timestamp_ms,badge_id,probability,decision"
    assert all(l.split(",")[1] == "B2" for l in lines[1:])


def test_train_needs_config_or_flags(sim, tmp_path):
    assert run("train", "--samples", sim / "samples.csv", "--labels", sim / "labels.json",
               "--seed", 1, "--out", tmp_path / "m.bvm") == EXIT_USAGE


def test_verify_metrics_flags_published_inconsistencies(capsys):
    code = run("verify-metrics", "--confusion", DATA / "confusion_table.csv",
               "--metrics", DATA / "published_scores.csv")
    out = capsys.readouterr().out
    assert code == EXIT_DATA
    rows = list(csv.DictReader(out.splitlines()))
    assert len(rows) == 48
    bad = {(r["scenario"], r["subject"], r["metric"]) for r in rows if r["status"] == "mismatch"}
    assert ("Whole meeting", "y", "f1") in bad
    assert ("Whole meeting", "z", "f1") in bad
    assert all(m == "f1" for _, _, m in bad)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "badgevad", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0
    for cmd in ("simulate", "features", "crossval", "train", "evaluate", "predict",
                "verify-metrics"):
        assert cmd in res.stdout


def test_score_columns_missing_is_data_error():
    assert run("verify-metrics", "--confusion", DATA / "confusion_table.csv",
               "--metrics", DATA / "confusion_table.csv") == EXIT_DATA
