"""Synthetic stand-in for a face/age dataset.

Each sample's latent age is drawn uniformly from the class range and its
features are a fixed random linear embedding of the (rescaled) age plus
isotropic Gaussian noise. The embedding depends only on ``seed``, so a
training set and a later record stream generated with the same seed share it.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .agemodel import Dataset
from .label_dist import AgeClassSet, encode_ages
from .stream import FaceRecord


@dataclass(frozen=True)
class SyntheticAgeDataset:
    n_samples: int = 5000
    input_dim: int = 32
    classes: AgeClassSet = AgeClassSet(1, 70)
    theta: float = 1.0
    noise: float = 0.5
    seed: int = 0

    def _embedding(self) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng([self.seed, 0])
        return rng.normal(size=self.input_dim), rng.normal(scale=0.5, size=self.input_dim)

    def embed(self, ages: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        direction, offset = self._embedding()
        lo, hi = self.classes.min_age, self.classes.max_age
        z = (2.0 * (np.asarray(ages, dtype=np.float64) - lo) / max(hi - lo, 1)) - 1.0
        x = z[:, None] * direction + offset
        return x + rng.normal(scale=self.noise, size=x.shape)

    def sample_ages(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(self.classes.min_age, self.classes.max_age + 1, size=n)

    def generate(self) -> tuple[Dataset, Dataset]:
        """Deterministic 80/20 train/test split."""
        if self.n_samples < 2:
            raise ValueError("need at least 2 samples for a train/test split")
        rng = np.random.default_rng([self.seed, 1])
        ages = self.sample_ages(self.n_samples, rng)
        X = self.embed(ages, rng)
        L = encode_ages(ages, self.theta, self.classes)
        n_train = (4 * self.n_samples) // 5
        data = Dataset(X, L, ages)
        return data.subset(np.arange(n_train)), data.subset(np.arange(n_train, self.n_samples))


def generate_synthetic(n: int, input_dim: int, classes: AgeClassSet = AgeClassSet(1, 70),
                       theta: float = 1.0, seed: int = 0,
                       noise: float = 0.5) -> tuple[Dataset, Dataset]:
    return SyntheticAgeDataset(n, input_dim, classes, theta, noise, seed).generate()


def write_dataset_csv(path, data: Dataset) -> None:
    """``age,f_0,...,f_{d-1}`` per row; labels are re-derived on load."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        d = data.features.shape[1]
        w.writerow(["age"] + [f"f_{j}" for j in range(d)])
        for age, x in zip(data.ages, data.features):
            w.writerow([int(age)] + [repr(float(v)) for v in x])


def read_dataset_csv(path, classes: AgeClassSet, theta: float = 1.0) -> Dataset:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if rows and rows[0][0] == "age":
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no samples")
    ages = np.array([int(r[0]) for r in rows])
    X = np.array([[float(v) for v in r[1:]] for r in rows])
    return Dataset(X, encode_ages(ages, theta, classes), ages)


def synthetic_records(source: SyntheticAgeDataset, n: int, rate: float = 50.0,
                      seed: int = 0, start: float = 0.0):
    """``n`` face records with Poisson arrivals at ``rate`` per second.

    Returns ``(records, true_ages)``; features share ``source``'s embedding.
    """
    rng = np.random.default_rng([source.seed, 2, seed])
    ages = source.sample_ages(n, rng)
    X = source.embed(ages, rng)
    t = start + np.cumsum(rng.exponential(1.0 / rate, size=n))
    records = [FaceRecord(f"r{i:07d}", float(t[i]), X[i]) for i in range(n)]
    return records, ages
