"""Age estimation metrics: expected-age prediction, MAE, age-group accuracy."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .agemodel import Dataset, ModelSpec, forward
from .label_dist import AgeClassSet, softmax

DEFAULT_GAPS = (5, 10, 15, 20)


@dataclass
class AgePrediction:
    expected_age: float
    prob: np.ndarray = field(repr=False)


def predict_age(prob, classes: AgeClassSet, method: str = "expectation") -> AgePrediction:
    """Point estimate from a class distribution: its mean (default) or its mode."""
    prob = np.asarray(prob, dtype=np.float64)
    if prob.shape != (classes.c,):
        raise ValueError(f"probability vector has shape {prob.shape}, expected ({classes.c},)")
    if method == "expectation":
        age = float(prob @ classes.ages)
    elif method == "argmax":
        age = float(classes.ages[int(np.argmax(prob))])
    else:
        raise ValueError(f"unknown prediction method {method!r}")
    return AgePrediction(age, prob)


def predict_ages(params, spec: ModelSpec, features, classes: AgeClassSet,
                 method: str = "expectation") -> np.ndarray:
    probs = softmax(forward(params, spec, np.atleast_2d(features)))
    if method == "expectation":
        return probs @ classes.ages
    if method == "argmax":
        return classes.ages[np.argmax(probs, axis=1)]
    raise ValueError(f"unknown prediction method {method!r}")


def _pair(predictions, truths) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(predictions, dtype=np.float64)
    l = np.asarray(truths, dtype=np.float64)
    if y.shape != l.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {l.shape}")
    if y.size == 0:
        raise ValueError("no predictions")
    return y, l


def mae(predictions, truths) -> float:
    y, l = _pair(predictions, truths)
    return float(np.mean(np.abs(l - y)))


def age_group_accuracy(predictions, truths, gap: float, rule: str = "centered",
                       min_age: int = 1) -> float:
    """Fraction of predictions counted correct for an age range of width ``gap``.

    ``rule="centered"``: correct when ``|prediction - truth| <= gap / 2``.
    ``rule="bins"``: correct when both fall in the same fixed bin
    ``floor((age - min_age) / gap)``.
    """
    if not gap > 0:
        raise ValueError(f"gap must be positive, got {gap}")
    y, l = _pair(predictions, truths)
    if rule == "centered":
        hit = np.abs(y - l) <= gap / 2.0
    elif rule == "bins":
        hit = np.floor((y - min_age) / gap) == np.floor((l - min_age) / gap)
    else:
        raise ValueError(f"unknown grouping rule {rule!r}")
    return float(np.mean(hit))


def error_histogram(predictions, truths, bin_width: float) -> list[tuple[float, int]]:
    """Counts of ``|error|`` in bins ``[0, w), [w, 2w), ...`` up to the largest error."""
    if not bin_width > 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    y, l = _pair(predictions, truths)
    bins = np.floor(np.abs(y - l) / bin_width).astype(np.int64)
    counts = np.bincount(bins)
    return [(k * bin_width, int(c)) for k, c in enumerate(counts)]


@dataclass
class EvalReport:
    mae: float
    group_accuracy: dict
    error_histogram: list
    bin_width: float
    n: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["# summary"])
        w.writerow(["n", "mae"])
        w.writerow([self.n, repr(self.mae)])
        w.writerow(["# group_accuracy"])
        w.writerow(["gap", "accuracy"])
        for gap, acc in self.group_accuracy.items():
            w.writerow([gap, repr(acc)])
        w.writerow(["# error_histogram"])
        w.writerow(["bin_low", "bin_high", "count"])
        for low, count in self.error_histogram:
            w.writerow([repr(low), repr(low + self.bin_width), count])
        return buf.getvalue()


def evaluate(predictions, truths, gaps=DEFAULT_GAPS, bin_width: float = 5.0,
             rule: str = "centered", min_age: int = 1) -> EvalReport:
    y, l = _pair(predictions, truths)
    return EvalReport(
        mae(y, l),
        {g: age_group_accuracy(y, l, g, rule, min_age) for g in gaps},
        error_histogram(y, l, bin_width), bin_width, len(y))


def evaluate_model(params, spec: ModelSpec, data: Dataset, classes: AgeClassSet,
                   method: str = "expectation", **kwargs) -> EvalReport:
    preds = predict_ages(params, spec, data.features, classes, method)
    return evaluate(preds, data.ages, min_age=classes.min_age, **kwargs)
