"""Interval-batched age scoring of face-feature records and age-group counting.

Records arrive in timestamp order and are cut into half-open windows
``[k*T, (k+1)*T)``. Each window is scored independently with the deployed
model and the predicted ages are added to a running age-group histogram,
which is persisted as CSV.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .agemodel import ModelSpec, forward
from .label_dist import AgeClassSet, softmax
from .metrics import AgePrediction, predict_age

log = logging.getLogger(__name__)


@dataclass
class FaceRecord:
    record_id: str
    timestamp: float
    features: np.ndarray


@dataclass
class IntervalBatch:
    interval_index: int
    records: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)


class IntervalBatcher:
    """Incremental windowing with a lateness bound.

    A window is emitted once the largest timestamp seen, minus ``lateness``,
    has passed its end. Records older than that watermark, or belonging to a
    window already emitted, are rejected and kept in :attr:`rejected`.
    """

    def __init__(self, interval_seconds: float = 1.0, lateness: float = 0.0,
                 start: float | None = None):
        if not interval_seconds > 0:
            raise ValueError(f"interval length must be positive, got {interval_seconds}")
        if lateness < 0:
            raise ValueError("lateness must be nonnegative")
        self.T = float(interval_seconds)
        self.lateness = float(lateness)
        self.next_index = None if start is None else math.floor(start / self.T)
        self.max_seen = -math.inf
        self.pending: dict[int, list] = {}
        self.rejected: list[FaceRecord] = []
        self.accepted = 0

    def index_of(self, timestamp: float) -> int:
        return math.floor(timestamp / self.T)

    def push(self, record: FaceRecord) -> list[IntervalBatch]:
        k = self.index_of(record.timestamp)
        if self.next_index is None:
            self.next_index = k
        if record.timestamp < self.max_seen - self.lateness or k < self.next_index:
            log.warning("dropping late record %s (t=%s, latest=%s)",
                        record.record_id, record.timestamp, self.max_seen)
            self.rejected.append(record)
            return []
        self.accepted += 1
        self.pending.setdefault(k, []).append(record)
        self.max_seen = max(self.max_seen, record.timestamp)
        watermark = self.max_seen - self.lateness
        return self._emit_before(self.index_of(watermark))

    def flush(self, end: float | None = None) -> list[IntervalBatch]:
        """Emit everything pending, plus empty windows up to time ``end``."""
        stop = max(self.pending, default=-1) + 1
        if end is not None:
            stop = max(stop, math.ceil(end / self.T))
        if self.next_index is None:
            self.next_index = 0
        return self._emit_before(stop)

    def _emit_before(self, stop: int) -> list[IntervalBatch]:
        out = []
        while self.next_index is not None and self.next_index < stop:
            k = self.next_index
            out.append(IntervalBatch(k, self.pending.pop(k, [])))
            self.next_index += 1
        return out


def batch_by_interval(records: Iterable[FaceRecord], interval_seconds: float = 1.0, *,
                      start: float | None = None, end: float | None = None,
                      lateness: float = 0.0,
                      batcher: IntervalBatcher | None = None) -> Iterator[IntervalBatch]:
    """Yield consecutive windows, empty ones included.

    The timeline begins at the window containing ``start`` (default: the first
    record) and runs to the last record or to ``end``, whichever is later.
    Pass your own ``batcher`` to inspect rejected records afterwards.
    """
    b = batcher or IntervalBatcher(interval_seconds, lateness, start)
    for rec in records:
        yield from b.push(rec)
    yield from b.flush(end)


def score_interval(params, spec: ModelSpec, batch: IntervalBatch,
                   classes: AgeClassSet) -> list[tuple[str, AgePrediction]]:
    good = []
    for rec in batch.records:
        if np.shape(rec.features) != (spec.input_dim,):
            log.warning("skipping record %s: %d features, model expects %d",
                        rec.record_id, np.size(rec.features), spec.input_dim)
            continue
        good.append(rec)
    if not good:
        return []
    probs = softmax(forward(params, spec, np.stack([r.features for r in good])))
    return [(r.record_id, predict_age(p, classes)) for r, p in zip(good, probs)]


@dataclass
class AgeGroupHistogram:
    group_width: int = 10
    min_age: int = 1
    counts: dict = field(default_factory=dict)
    total: int = 0

    def group_of(self, age: float) -> int:
        return math.floor((age - self.min_age) / self.group_width)

    def copy(self) -> "AgeGroupHistogram":
        return AgeGroupHistogram(self.group_width, self.min_age, dict(self.counts), self.total)


def update_histogram(hist: AgeGroupHistogram, predictions) -> AgeGroupHistogram:
    """New histogram with each prediction's expected age counted in its group.

    ``predictions`` may hold :class:`AgePrediction` objects, ``(id, prediction)``
    pairs as returned by :func:`score_interval`, or bare ages.
    """
    out = hist.copy()
    for p in predictions:
        if isinstance(p, tuple):
            p = p[1]
        age = p.expected_age if isinstance(p, AgePrediction) else float(p)
        g = out.group_of(age)
        out.counts[g] = out.counts.get(g, 0) + 1
        out.total += 1
    return out


def persist_histogram(hist: AgeGroupHistogram, path) -> None:
    """Atomically (re)write ``group_low,group_high,count`` rows plus a total row."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(prefix=path.name, suffix=".tmp", dir=path.parent or ".")
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group_low", "group_high", "count"])
            for g in sorted(hist.counts):
                low = hist.min_age + g * hist.group_width
                w.writerow([low, low + hist.group_width, hist.counts[g]])
            w.writerow(["total", "", hist.total])
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write histogram to {path}: {exc}") from exc


def load_histogram(path, group_width: int | None = None,
                   min_age: int | None = None) -> AgeGroupHistogram:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["group_low", "group_high", "count"]:
        raise ValueError(f"{path}: not a histogram file")
    body, total_row = rows[1:-1], rows[-1]
    if total_row[0] != "total":
        raise ValueError(f"{path}: missing total row")
    if body:
        first_low, first_high = int(body[0][0]), int(body[0][1])
        group_width = group_width or first_high - first_low
    if group_width is None:
        group_width = 10
    if min_age is None:
        min_age = 1
    hist = AgeGroupHistogram(group_width, min_age)
    for low, _, count in body:
        hist.counts[(int(low) - min_age) // group_width] = int(count)
    hist.total = int(total_row[2])
    return hist


def read_records(path) -> Iterator[FaceRecord]:
    """Parse ``record_id,timestamp,f_0,...`` lines; a header line is optional."""
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "record_id":
                continue
            yield FaceRecord(row[0], float(row[1]), np.array([float(v) for v in row[2:]]))


def write_records(path, records: Iterable[FaceRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for r in records:
            w.writerow([r.record_id, repr(float(r.timestamp))] + [repr(float(v)) for v in r.features])


@dataclass
class StreamSummary:
    intervals: int
    accepted: int
    scored: int
    rejected: int
    histogram: AgeGroupHistogram


def run_demographics(params, spec: ModelSpec, classes: AgeClassSet,
                     records: Iterable[FaceRecord], out_dir, interval_seconds: float = 1.0,
                     group_width: int = 10, lateness: float = 0.0) -> StreamSummary:
    """Score a record stream window by window and write ``scores.csv`` and ``histogram.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    batcher = IntervalBatcher(interval_seconds, lateness)
    hist = AgeGroupHistogram(group_width, classes.min_age)
    n_intervals = scored = 0
    with open(out_dir / "scores.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["interval", "record_id", "expected_age"])
        for batch in batch_by_interval(records, batcher=batcher):
            n_intervals += 1
            preds = score_interval(params, spec, batch, classes)
            for rid, p in preds:
                w.writerow([batch.interval_index, rid, repr(p.expected_age)])
            scored += len(preds)
            hist = update_histogram(hist, preds)
    persist_histogram(hist, out_dir / "histogram.csv")
    return StreamSummary(n_intervals, batcher.accepted, scored, len(batcher.rejected), hist)
