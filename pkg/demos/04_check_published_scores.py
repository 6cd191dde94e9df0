"""
Recomputing reported scores from confusion counts
=================================================

Balanced accuracy and F1 follow directly from a confusion matrix, so a
results table that lists both can be checked for internal consistency.
This uses the tables shipped with the tests.
"""
import csv
from pathlib import Path

from badgevad.pipeline import read_table, verify_metrics

data = Path(__file__).resolve().parent.parent / "tests" / "data"
confusion = read_table((data / "confusion_table.csv").read_text())
reported = read_table((data / "published_scores.csv").read_text())

checks = verify_metrics(confusion, reported)
ok = [c for c in checks if c.ok]
print(f"{len(ok)} of {len(checks)} reported values reproduce within 0.0005")
for c in checks:
    if not c.ok:
        print(f"  {c.scenario} / {c.subject} {c.metric}: reported {c.reported:.3f}, "
              f"counts give {c.computed:.4f}")

# the mismatching F1 values equal the balanced accuracy of the same row
ba = {(r["scenario"], r["subject"]): float(r["balanced_accuracy"]) for r in reported}
for c in checks:
    if not c.ok and ba[c.scenario, c.subject] == c.reported:
        print(f"  {c.scenario} / {c.subject}: F1 repeats the balanced accuracy")
