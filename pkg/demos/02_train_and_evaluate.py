"""
Train one model and score it per meeting phase
==============================================

Trains a CNN-LSTM on one simulated meeting, then evaluates it on a second
meeting with the same phase layout. Scores come out per phase and per badge,
with pooled "Overall" rows.
"""
import json
import warnings

from badgevad.features import FeatureSet, build_dataset
from badgevad.ingest import pivot_volumes, rasterize_labels
from badgevad.models import Arch, ArchSpec, build_model, parameter_count
from badgevad.pipeline import evaluate_phases, parse_phases, train_to_convergence
from badgevad.simulate import Scenario, SimConfig, simulate_meeting

layout = ((Scenario.NORMAL, 120), (Scenario.ONE_ON_ONE, 120), (Scenario.ONE_ON_ONE_TV, 120))


def meeting(seed):
    out = simulate_meeting(SimConfig(n_badges=6, duration_s=360, seed=seed, segments=layout))
    vm = pivot_volumes(out.samples)
    return out, vm, rasterize_labels(out.labels, vm)


_, vm, lm = meeting(seed=10)
train_ds = build_dataset(vm, lm, FeatureSet.SET_B, stride=10)
print(len(train_ds), "training windows")

model = build_model(ArchSpec(Arch.CNN_LSTM, FeatureSet.SET_B, False, seed=3))
print(model.spec.arch.value, parameter_count(model), "parameters")
train_to_convergence(model, train_ds, seed=3, batch_size=64, max_epochs=12, patience=3)
print("epochs run", model.metadata["epochs_run"], "best epoch", model.metadata["best_epoch"])

# a fresh meeting for testing
test, vm, lm = meeting(seed=11)
subjects = ["B1", "B2", "B3"]
phases = parse_phases(json.dumps(test.phases), subjects)
windows = {s: build_dataset(vm, lm, FeatureSet.SET_B, primaries=[s]) for s in subjects}
with warnings.catch_warnings():
    warnings.simplefilter("ignore")  # cells with no speech have no balanced accuracy
    table = evaluate_phases(model, windows, phases, subjects)

print(f"{'scenario':16s} {'subject':8s} {'BA':>6s} {'F1':>6s}")
for row in table.rows:
    if row.scores is None:
        print(f"{row.scenario:16s} {row.subject:8s}   (undefined)")
    else:
        print(f"{row.scenario:16s} {row.subject:8s} {row.scores.balanced_accuracy:6.3f} "
              f"{row.scores.f1:6.3f}")
