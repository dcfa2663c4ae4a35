"""Gaussian label distributions over age classes and the K-L training loss.

Ages are encoded as a truncated Gaussian over the five neighbouring classes
``a-2 .. a+2`` and the network is trained to match that distribution with a
softmax output, using the cross-entropy form of the K-L divergence.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Half-width of the Gaussian support around the true age, in classes.
SUPPORT_RADIUS = 2


@dataclass(frozen=True)
class AgeClassSet:
    """Contiguous integer ages ``min_age..max_age``, one class per year."""

    min_age: int = 1
    max_age: int = 101

    def __post_init__(self):
        if self.min_age < 1:
            raise ValueError(f"min_age must be >= 1, got {self.min_age}")
        if self.max_age < self.min_age:
            raise ValueError(
                f"max_age ({self.max_age}) must be >= min_age ({self.min_age})")

    @property
    def c(self) -> int:
        return self.max_age - self.min_age + 1

    @property
    def ages(self) -> np.ndarray:
        return np.arange(self.min_age, self.max_age + 1, dtype=np.float64)

    def index(self, age: int) -> int:
        if not self.min_age <= age <= self.max_age:
            raise IndexError(
                f"age {age} outside class range [{self.min_age}, {self.max_age}]")
        return int(age) - self.min_age


def gaussian_label_distribution(age: int, theta: float = 1.0,
                                classes: AgeClassSet = AgeClassSet()) -> np.ndarray:
    """Label distribution for a single integer ``age``.

    Classes within ``SUPPORT_RADIUS`` of ``age`` receive weight
    ``exp(-(age - a_i)**2 / (2 * theta))``; the true age has weight 1. Support
    falling outside the class range is cut off and the result renormalized.
    """
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    centre = classes.index(age)
    lo = max(0, centre - SUPPORT_RADIUS)
    hi = min(classes.c - 1, centre + SUPPORT_RADIUS)
    d = np.arange(lo, hi + 1, dtype=np.float64) - centre
    w = np.exp(-(d * d) / (2.0 * theta))
    probs = np.zeros(classes.c)
    probs[lo:hi + 1] = w / w.sum()
    return probs


def encode_ages(ages, theta: float = 1.0,
                classes: AgeClassSet = AgeClassSet()) -> np.ndarray:
    """Stack :func:`gaussian_label_distribution` rows for a sequence of ages."""
    ages = list(ages)
    out = np.empty((len(ages), classes.c))
    for i, a in enumerate(ages):
        out[i] = gaussian_label_distribution(int(a), theta, classes)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-shifted softmax along the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def kl_divergence(p, q) -> float:
    """D(p || q) in nats, with ``0 * ln(0 / q) = 0``."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    _check_same_shape(p, q)
    support = p > 0
    if np.any(q[support] <= 0):
        raise ValueError("kl divergence undefined: q has zero mass where p > 0")
    ps, qs = p[support], q[support]
    return float(np.sum(ps * np.log(ps / qs)))


def entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    ps = p[p > 0]
    return float(-np.sum(ps * np.log(ps)))


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def kl_loss(label, logits) -> float:
    """Cross-entropy ``-sum_j l_j ln softmax(f)_j``.

    Accepts single vectors or ``(batch, c)`` arrays; batches return the mean.
    """
    label = np.asarray(label, dtype=np.float64)
    logits = np.asarray(logits, dtype=np.float64)
    _check_same_shape(label, logits)
    per_row = -np.sum(label * _log_softmax(logits), axis=-1)
    return float(np.mean(per_row))


def kl_loss_gradient(label, logits) -> np.ndarray:
    """Gradient of :func:`kl_loss` (single row) w.r.t. the logits: ``Q - l``."""
    label = np.asarray(label, dtype=np.float64)
    logits = np.asarray(logits, dtype=np.float64)
    _check_same_shape(label, logits)
    return softmax(logits) - label
