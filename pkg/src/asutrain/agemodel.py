"""Small ReLU MLP over flat parameter vectors, with a binary checkpoint format.

Parameters live in one contiguous float64 vector. Each layer occupies a
row-major ``(fan_in, fan_out)`` weight block followed by its ``fan_out``
biases, layers in input-to-output order.

Checkpoint layout (all little-endian)::

    magic      4s   b"ASUM"
    version    u32  1
    input_dim  u32
    n_hidden   u32
    hidden     n_hidden x u32
    c          u32
    min_age    u32
    seed       i64
    P          u64
    payload    P x f32
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .label_dist import kl_loss, softmax

CHECKPOINT_MAGIC = b"ASUM"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    hidden_dims: tuple = ()
    c: int = 101
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.c)
        if any(d < 1 for d in dims):
            raise ValueError(f"all layer dimensions must be >= 1, got {dims}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.hidden_dims, self.c)
        return list(zip(dims[:-1], dims[1:]))

    @property
    def num_params(self) -> int:
        return sum(i * o + o for i, o in self.layer_dims)


@dataclass
class Sample:
    features: np.ndarray
    label: np.ndarray
    age: int | None = None


@dataclass
class Dataset:
    """Row-aligned features, label distributions and integer ages."""

    features: np.ndarray
    labels: np.ndarray
    ages: np.ndarray = field(default=None)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.labels = np.atleast_2d(np.asarray(self.labels, dtype=np.float64))
        if self.ages is None:
            self.ages = np.full(len(self.features), -1, dtype=np.int64)
        self.ages = np.asarray(self.ages, dtype=np.int64)
        if not len(self.features) == len(self.labels) == len(self.ages):
            raise ValueError("features, labels and ages must have equal length")

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "Dataset":
        return cls(np.stack([s.features for s in samples]),
                   np.stack([s.label for s in samples]),
                   np.array([-1 if s.age is None else s.age for s in samples]))

    def __len__(self) -> int:
        return len(self.features)

    def __getitem__(self, i) -> Sample:
        return Sample(self.features[i], self.labels[i], int(self.ages[i]))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.ages[idx])


def unflatten(params: np.ndarray, spec: ModelSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views ``(W, b)`` per layer into the flat vector (no copies)."""
    params = np.asarray(params)
    if params.shape != (spec.num_params,):
        raise ValueError(
            f"parameter vector has shape {params.shape}, spec needs ({spec.num_params},)")
    layers = []
    off = 0
    for fan_in, fan_out in spec.layer_dims:
        W = params[off:off + fan_in * fan_out].reshape(fan_in, fan_out)
        off += fan_in * fan_out
        b = params[off:off + fan_out]
        off += fan_out
        layers.append((W, b))
    return layers


def init_model(spec: ModelSpec) -> np.ndarray:
    """Glorot-uniform weights, zero biases, drawn from ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    params = np.zeros(spec.num_params)
    for W, _ in unflatten(params, spec):
        fan_in, fan_out = W.shape
        s = np.sqrt(6.0 / (fan_in + fan_out))
        W[...] = rng.uniform(-s, s, size=W.shape)
    return params


def _check_features(features: np.ndarray, spec: ModelSpec) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != spec.input_dim:
        raise ValueError(
            f"feature dimension {features.shape[-1]} does not match input_dim {spec.input_dim}")
    return features


def forward(params: np.ndarray, spec: ModelSpec, features) -> np.ndarray:
    """Logits for a single feature vector or a ``(batch, input_dim)`` array."""
    h = _check_features(features, spec)
    layers = unflatten(params, spec)
    for k, (W, b) in enumerate(layers):
        h = h @ W + b
        if k < len(layers) - 1:
            h = np.maximum(h, 0.0)
    return h


def batch_loss(params: np.ndarray, spec: ModelSpec, features, labels) -> float:
    return kl_loss(labels, forward(params, spec, np.atleast_2d(features)))


def loss_and_gradient(params: np.ndarray, spec: ModelSpec, features,
                      labels) -> tuple[float, np.ndarray]:
    """Mean K-L loss over the batch and its gradient w.r.t. ``params``."""
    X = np.atleast_2d(_check_features(features, spec))
    Y = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    if len(X) == 0:
        raise ValueError("batch must be non-empty")
    if Y.shape != (len(X), spec.c):
        raise ValueError(f"labels have shape {Y.shape}, expected ({len(X)}, {spec.c})")
    layers = unflatten(params, spec)

    acts = [X]
    h = X
    for k, (W, b) in enumerate(layers):
        h = h @ W + b
        if k < len(layers) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    logits = acts[-1]
    loss = kl_loss(Y, logits)

    grad = np.zeros_like(params, dtype=np.float64)
    grad_layers = unflatten(grad, spec)
    delta = (softmax(logits) - Y) / len(X)
    for k in range(len(layers) - 1, -1, -1):
        W, _ = layers[k]
        gW, gb = grad_layers[k]
        gW[...] = acts[k].T @ delta
        gb[...] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ W.T) * (acts[k] > 0)
    return loss, grad


def batch_gradient(params: np.ndarray, spec: ModelSpec, features, labels) -> np.ndarray:
    """Mean-over-batch gradient of the K-L loss; the worker's update vector."""
    return loss_and_gradient(params, spec, features, labels)[1]


def apply_update(params: np.ndarray, aggregate: np.ndarray, lr: float,
                 n_workers: int) -> np.ndarray:
    """Averaged-gradient SGD step ``W - lr * aggregate / n_workers``."""
    params = np.asarray(params)
    aggregate = np.asarray(aggregate)
    if params.shape != aggregate.shape:
        raise ValueError(f"shape mismatch: {params.shape} vs {aggregate.shape}")
    if not lr > 0:
        raise ValueError(f"lr must be positive, got {lr}")
    if n_workers < 1:
        raise ValueError(f"n_workers must be >= 1, got {n_workers}")
    return params - lr * (aggregate / n_workers)


def save_checkpoint(path, params: np.ndarray, spec: ModelSpec, min_age: int = 1) -> None:
    params = np.asarray(params)
    if params.shape != (spec.num_params,):
        raise ValueError("parameter vector does not match spec")
    header = struct.pack("<4sIII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                         spec.input_dim, len(spec.hidden_dims))
    header += struct.pack(f"<{len(spec.hidden_dims)}I", *spec.hidden_dims)
    header += struct.pack("<IIqQ", spec.c, min_age, spec.seed, spec.num_params)
    payload = params.astype("<f4").tobytes()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header + payload)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[np.ndarray, ModelSpec, int]:
    """Return ``(params, spec, min_age)``; params come back as float64."""
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, version, input_dim, n_hidden = struct.unpack_from("<4sIII", blob, 0)
    if magic != CHECKPOINT_MAGIC or version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} model checkpoint")
    off = 16
    hidden = struct.unpack_from(f"<{n_hidden}I", blob, off)
    off += 4 * n_hidden
    c, min_age, seed, P = struct.unpack_from("<IIqQ", blob, off)
    off += 24
    spec = ModelSpec(input_dim, hidden, c, seed)
    if P != spec.num_params or len(blob) - off != 4 * P:
        raise ValueError(f"{path}: payload size does not match header")
    params = np.frombuffer(blob, dtype="<f4", offset=off).astype(np.float64)
    return params, spec, min_age
