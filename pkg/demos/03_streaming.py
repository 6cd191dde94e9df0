"""
Causal streaming predictions
============================

Replays a recording frame by frame through StreamPredictor and checks the
result against the offline windows. The first decision for a badge comes
once 60 valid frames have been seen.
"""
import numpy as np

from badgevad.features import FeatureSet, build_dataset
from badgevad.ingest import pivot_volumes, rasterize_labels
from badgevad.models import Arch, ArchSpec, build_model, forward
from badgevad.pipeline import StreamPredictor, replay_frames
from badgevad.simulate import SimConfig, simulate_meeting

out = simulate_meeting(SimConfig(n_badges=4, duration_s=60, seed=4, dropout=0.02))
vm = pivot_volumes(out.samples)
lm = rasterize_labels(out.labels, vm)
print("missing cells after gap filling:", int(np.isnan(vm.values).sum()))

# an untrained network is enough to compare the two paths
model = build_model(ArchSpec(Arch.CNN_LSTM, FeatureSet.SET_A, True, seed=0))
sp = StreamPredictor(model, vm.badge_ids, primaries=["B2"])

decisions = []
for ts, row in replay_frames(vm):
    decisions += sp.push(ts, row)
print(len(decisions), "decisions for B2, first at", decisions[0].timestamp_ms - vm.t0_ms, "ms")
print("worst emission latency %.4f s" % max(d.latency_s for d in decisions))

offline = build_dataset(vm, lm, FeatureSet.SET_A, normalized=True, primaries=["B2"])
same_ts = [d.timestamp_ms for d in decisions] == offline.end_timestamps_ms.tolist()
same_p = np.array_equal([d.probability for d in decisions], forward(model, offline.samples))
print("timestamps agree:", same_ts, " probabilities bit-identical:", same_p)
