"""
Scoring an age model
====================

A trained model outputs a distribution over ages. Its expectation is the
predicted age. We report mean absolute error, the share of predictions
that fall in ranges of growing width, and a histogram of errors.
"""

from asutrain import ModelSpec, TrainConfig, train
from asutrain.data import SyntheticAgeDataset
from asutrain.label_dist import AgeClassSet
from asutrain.metrics import evaluate_model

classes = AgeClassSet(1, 70)
train_set, test_set = SyntheticAgeDataset(4000, 32, classes, seed=1).generate()
config = TrainConfig(ModelSpec(32, (64,), classes.c), n_workers=2, filter="ASU", delta=5e-2,
                     lr=0.2, batch_size=32, max_iterations=1500, eval_every=1500)
params, _ = train(config, train_set, test_set)

report = evaluate_model(params, config.spec, test_set, classes, gaps=(5, 10, 15, 20))
print(f"MAE {report.mae:.2f} years on {report.n} test samples")
for gap, acc in report.group_accuracy.items():
    print(f"  within a {gap:>2}-year range: {acc:.3f}")

# the argmax predictor is available for comparison
arg = evaluate_model(params, config.spec, test_set, classes, method="argmax")
print(f"argmax predictor MAE {arg.mae:.2f}")

print(report.to_csv())
