"""Parameter-server training with aggregated sparse updates, for age estimation."""
from .agemodel import (Dataset, ModelSpec, Sample, apply_update, batch_gradient, forward,
                       init_model, load_checkpoint, save_checkpoint)
from .data import SyntheticAgeDataset, generate_synthetic
from .filters import FilterKind, FilterState, SparseUpdate, densify, drop_fraction, filter_push
from .label_dist import (AgeClassSet, gaussian_label_distribution, kl_divergence, kl_loss,
                         kl_loss_gradient, softmax)
from .metrics import age_group_accuracy, error_histogram, mae, predict_age
from .netmodel import (IterationTiming, LinkModel, dense_bytes, iteration_time, sparse_bytes,
                       speedup_ratio)
from .ps import TrainConfig, TrainingLog, partition, server_step, train, worker_step

__version__ = "0.1.0"
