"""
Training on a parameter server with sparse pushes
=================================================

Four worker threads each hold a shard of a synthetic age dataset.
Every iteration they push filtered gradients, the server averages them
and sends back only the parameters that changed. We compare the three
filters at the same threshold.
"""

from asutrain import ModelSpec, TrainConfig, train
from asutrain.data import SyntheticAgeDataset
from asutrain.label_dist import AgeClassSet
from asutrain.ps import with_filter

source = SyntheticAgeDataset(5000, 32, AgeClassSet(1, 70), noise=0.5, seed=0)
train_set, test_set = source.generate()

config = TrainConfig(ModelSpec(32, (64,), 70), n_workers=4, filter="RAW", delta=6e-2,
                     lr=0.2, batch_size=32, max_iterations=2000, eval_every=500)

logs = {}
for kind in ("RAW", "DSU", "ASU"):
    _, logs[kind] = train(with_filter(config, kind), train_set, test_set)

# test loss every 500 iterations
for kind, log in logs.items():
    curve = "  ".join(f"{loss:.3f}" for _, loss in log.test_losses)
    print(f"{kind}: test loss {curve}   mean drop {log.mean_drop_fraction():.3f}")

# bytes pushed by worker 0 over the whole run
for kind, log in logs.items():
    total = sum(r.push_bytes[0] for r in log.rows)
    print(f"{kind}: worker 0 pushed {total / 1e6:.2f} MB")

# DSU throws away most of the signal; ASU delays it instead, so it tracks RAW
