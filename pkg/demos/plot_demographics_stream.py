"""
Live age demographics from a stream of faces
============================================

Face records arrive with timestamps. They are grouped into one-second
windows, each window is scored by the model, and the running age-group
histogram is written to disk after the stream ends.
"""

import tempfile
from pathlib import Path

from asutrain import ModelSpec, TrainConfig, train
from asutrain.data import SyntheticAgeDataset, synthetic_records
from asutrain.label_dist import AgeClassSet
from asutrain.stream import run_demographics

classes = AgeClassSet(1, 70)
source = SyntheticAgeDataset(3000, 16, classes, seed=2)
train_set, test_set = source.generate()
config = TrainConfig(ModelSpec(16, (32,), classes.c), n_workers=2, filter="ASU", delta=5e-2,
                     lr=0.2, batch_size=32, max_iterations=800, eval_every=800)
params, _ = train(config, train_set, test_set)

# about 40 faces per second for 50 seconds
records, true_ages = synthetic_records(source, 2000, rate=40.0, seed=5)

out = Path(tempfile.mkdtemp())
summary = run_demographics(params, config.spec, classes, records, out,
                           interval_seconds=1.0, group_width=10)
print(f"{summary.intervals} windows, {summary.accepted} records accepted, "
      f"{summary.rejected} rejected")
print((out / "histogram.csv").read_text())
