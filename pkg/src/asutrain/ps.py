"""Bulk-synchronous parameter server with filtered pushes and sparse pulls.

Every iteration each worker computes a mini-batch gradient on its current
parameter snapshot, passes it through its push filter and sends the result to
the server. Once all ``n_workers`` pushes for the iteration have arrived the
server sums them (in worker-id order, so the result does not depend on
arrival order), takes an averaged SGD step and answers every worker with the
new values of the coordinates that were touched. Workers never run ahead of
the server by more than one iteration.

``train(..., threaded=True)`` runs one thread per worker talking to the
server through queues; ``threaded=False`` runs the same steps inline in
worker-id order.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import queue
import threading
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .agemodel import Dataset, ModelSpec, apply_update, batch_loss, init_model, loss_and_gradient
from .filters import FilterKind, FilterState, SparseUpdate, drop_fraction, filter_push
from .netmodel import dense_bytes, sparse_bytes

log = logging.getLogger(__name__)

CSV_COLUMNS = ("iteration", "worker_id", "train_loss", "drop_fraction",
               "push_bytes", "pull_bytes", "test_loss")
SERVER_UPDATE_RULE = "W <- W - lr * sum(pushes) / n_workers"


class ProtocolError(RuntimeError):
    """A bulk-synchronous invariant was violated (missing, duplicate or stale push)."""


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, what: str):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    spec: ModelSpec
    n_workers: int = 4
    filter: FilterKind = FilterKind.ASU
    delta: float = 1e-5
    lr: float = 0.1
    batch_size: int = 16
    max_iterations: int = 1000
    eval_every: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "filter", FilterKind(self.filter))
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")

    @property
    def dense_traffic(self) -> bool:
        """Whether pushes and pulls are accounted as dense vectors.

        Only a zero threshold (always the case for RAW) can leave every
        coordinate in play, so it is accounted with the dense encoding.
        """
        return self.filter is FilterKind.RAW or self.delta == 0.0

    def as_flat_dict(self) -> dict:
        d = asdict(self)
        d["filter"] = self.filter.value
        spec = d.pop("spec")
        d.update({f"spec.{k}": v for k, v in spec.items()})
        d["spec.hidden_dims"] = list(self.spec.hidden_dims)
        return d


@dataclass
class Shard:
    worker_id: int
    data: Dataset

    def __len__(self) -> int:
        return len(self.data)

    def batch(self, iteration: int, batch_size: int) -> Dataset:
        """Sequential mini-batch for ``iteration`` (0-based), wrapping around."""
        if len(self) == 0:
            raise ValueError(f"worker {self.worker_id} has an empty shard")
        start = iteration * batch_size
        idx = (start + np.arange(batch_size)) % len(self)
        return self.data.subset(idx)


@dataclass
class PullResponse:
    iteration: int
    indices: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)

    def apply(self, snapshot: np.ndarray) -> None:
        snapshot[self.indices] = self.values


@dataclass
class IterationRecord:
    iteration: int
    train_loss: list
    drop_fraction: list
    push_bytes: list
    pull_bytes: int
    test_loss: float | None = None


@dataclass
class TrainingLog:
    config: TrainConfig
    rows: list = field(default_factory=list)

    @property
    def test_losses(self) -> list[tuple[int, float]]:
        return [(r.iteration, r.test_loss) for r in self.rows if r.test_loss is not None]

    @property
    def final_test_loss(self) -> float:
        return self.test_losses[-1][1]

    def mean_drop_fraction(self, skip: int = 0) -> float:
        return float(np.mean([np.mean(r.drop_fraction) for r in self.rows[skip:]]))

    def header_lines(self) -> list[str]:
        lines = [f"{k} = {v}" for k, v in self.config.as_flat_dict().items()]
        lines.append(f"server_update = {SERVER_UPDATE_RULE}")
        return lines

    def to_csv(self, fh=None, preamble: Sequence[str] = ()) -> str:
        """Write comment header plus one row per (iteration, worker)."""
        buf = io.StringIO()
        for line in [*preamble, *self.header_lines()]:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            test = "" if r.test_loss is None else repr(r.test_loss)
            for wid in range(len(r.train_loss)):
                w.writerow([r.iteration, wid, repr(r.train_loss[wid]),
                            repr(r.drop_fraction[wid]), r.push_bytes[wid],
                            r.pull_bytes, test])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def read_log_csv(path) -> list[dict]:
    """Rows of a TrainingLog CSV as dicts (comment lines skipped)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def partition(dataset: Dataset, n: int, seed: int = 0) -> list[Shard]:
    """Seeded shuffle then round-robin split into ``n`` disjoint shards."""
    if n < 1:
        raise ValueError("need at least one worker")
    if len(dataset) == 0:
        raise ValueError("cannot partition an empty dataset")
    if n > len(dataset):
        raise ValueError(
            f"{n} workers but only {len(dataset)} samples: some shards would be empty")
    order = np.random.default_rng(seed).permutation(len(dataset))
    return [Shard(i, dataset.subset(order[i::n])) for i in range(n)]


def worker_step(worker_id: int, shard: Shard, params_snapshot: np.ndarray,
                filter_state: FilterState, config: TrainConfig,
                iteration: int = 0) -> tuple[SparseUpdate, FilterState, float]:
    batch = shard.batch(iteration, config.batch_size)
    loss, grad = loss_and_gradient(params_snapshot, config.spec, batch.features, batch.labels)
    pushed, state = filter_push(filter_state, grad)
    return pushed, state, loss


def server_step(params: np.ndarray, pushes, lr: float, n: int,
                iteration: int = 0) -> tuple[np.ndarray, PullResponse]:
    """Aggregate one push per worker, apply the SGD step, build the pull.

    ``pushes`` is a mapping ``worker_id -> SparseUpdate`` or a sequence indexed
    by worker id. The pull lists every coordinate any worker pushed, even if
    the contributions cancel.
    """
    if not isinstance(pushes, Mapping):
        pushes = dict(enumerate(pushes))
    if sorted(pushes) != list(range(n)):
        raise ProtocolError(
            f"iteration {iteration}: expected pushes from workers 0..{n - 1}, "
            f"got {sorted(pushes)}")
    aggregate = np.zeros(len(params))
    touched = np.zeros(len(params), dtype=bool)
    for wid in range(n):
        p = pushes[wid]
        if p.total_dims != len(params):
            raise ProtocolError(f"worker {wid} pushed {p.total_dims} dims, model has {len(params)}")
        aggregate[p.indices] += p.values
        touched[p.indices] = True
    new_params = apply_update(params, aggregate, lr, n)
    idx = np.flatnonzero(touched)
    return new_params, PullResponse(iteration, idx, new_params[idx])


@dataclass
class _Push:
    worker_id: int
    iteration: int
    update: SparseUpdate
    loss: float
    snapshot: np.ndarray | None = None


@dataclass
class _Failure:
    worker_id: int
    error: BaseException


class _Worker:
    def __init__(self, shard: Shard, params: np.ndarray, config: TrainConfig):
        self.shard = shard
        self.config = config
        self.snapshot = params.copy()
        self.state = FilterState.new(config.filter, config.delta, len(params))

    def step(self, iteration: int, keep_snapshot: bool) -> _Push:
        pushed, self.state, loss = worker_step(
            self.shard.worker_id, self.shard, self.snapshot, self.state, self.config, iteration)
        return _Push(self.shard.worker_id, iteration, pushed, loss,
                     self.snapshot.copy() if keep_snapshot else None)

    def receive(self, pull: PullResponse) -> None:
        pull.apply(self.snapshot)


class _Server:
    def __init__(self, params: np.ndarray, config: TrainConfig, test_set: Dataset | None,
                 on_iteration: Callable | None, verify_snapshots: bool):
        self.params = params
        self.config = config
        self.test_set = test_set
        self.on_iteration = on_iteration
        self.verify_snapshots = verify_snapshots
        self.log = TrainingLog(config)

    def handle(self, iteration: int, msgs: Sequence[_Push]) -> PullResponse:
        cfg = self.config
        for m in msgs:
            if m.iteration != iteration:
                raise ProtocolError(
                    f"worker {m.worker_id} sent a push for iteration {m.iteration} "
                    f"during iteration {iteration}")
            if self.verify_snapshots and not np.array_equal(m.snapshot, self.params):
                raise ProtocolError(f"worker {m.worker_id} snapshot diverged from server")
        if len({m.worker_id for m in msgs}) != len(msgs):
            raise ProtocolError(f"duplicate push in iteration {iteration}")
        by_id = {m.worker_id: m for m in msgs}
        self.params, pull = server_step(
            self.params, {w: m.update for w, m in by_id.items()}, cfg.lr, cfg.n_workers, iteration)

        t = iteration + 1
        losses = [by_id[w].loss for w in range(cfg.n_workers)]
        if not all(math.isfinite(x) for x in losses):
            raise DivergenceError(t, "training loss")
        if cfg.dense_traffic:
            push_b = [dense_bytes(cfg.spec.num_params)] * cfg.n_workers
            pull_b = dense_bytes(cfg.spec.num_params)
        else:
            push_b = [sparse_bytes(len(by_id[w].update)) for w in range(cfg.n_workers)]
            pull_b = sparse_bytes(len(pull))
        test_loss = None
        if self.test_set is not None and (t % cfg.eval_every == 0 or t == cfg.max_iterations):
            test_loss = batch_loss(self.params, cfg.spec, self.test_set.features,
                                   self.test_set.labels)
            if not math.isfinite(test_loss):
                raise DivergenceError(t, "test loss")
        self.log.rows.append(IterationRecord(
            t, losses, [drop_fraction(by_id[w].update) for w in range(cfg.n_workers)],
            push_b, pull_b, test_loss))
        if self.on_iteration is not None:
            self.on_iteration(t, self.params)
        return pull


def _run_inline(workers: list[_Worker], server: _Server, iterations: int,
                verify: bool) -> None:
    for it in range(iterations):
        msgs = [w.step(it, verify) for w in workers]
        pull = server.handle(it, msgs)
        for w in workers:
            w.receive(pull)


def _run_threaded(workers: list[_Worker], server: _Server, iterations: int,
                  verify: bool) -> None:
    to_server: queue.Queue = queue.Queue()
    inboxes = [queue.Queue() for _ in workers]

    def loop(w: _Worker, inbox: queue.Queue) -> None:
        try:
            for it in range(iterations):
                to_server.put(w.step(it, verify))
                pull = inbox.get()
                if pull is None:
                    return
                w.receive(pull)
        except BaseException as exc:  # forwarded to the server thread
            to_server.put(_Failure(w.shard.worker_id, exc))

    threads = [threading.Thread(target=loop, args=(w, box), daemon=True,
                                name=f"ps-worker-{w.shard.worker_id}")
               for w, box in zip(workers, inboxes)]
    for th in threads:
        th.start()
    try:
        for it in range(iterations):
            msgs = []
            while len(msgs) < len(workers):
                m = to_server.get()
                if isinstance(m, _Failure):
                    raise m.error
                msgs.append(m)
            pull = server.handle(it, msgs)
            for box in inboxes:
                box.put(pull)
    finally:
        for box in inboxes:
            box.put(None)
        for th in threads:
            th.join()


def train(config: TrainConfig, dataset: Dataset, test_set: Dataset | None = None, *,
          threaded: bool = True, on_iteration: Callable | None = None,
          verify_snapshots: bool = False,
          init_params: np.ndarray | None = None) -> tuple[np.ndarray, TrainingLog]:
    """Run ``config.max_iterations`` synchronous iterations.

    ``on_iteration(t, params)`` is called by the server after step ``t``
    (1-based). With ``verify_snapshots`` every push carries the worker's
    snapshot and the server checks it equals its own parameters bitwise.
    """
    params = init_model(config.spec) if init_params is None else np.array(init_params, dtype=np.float64)
    if len(params) != config.spec.num_params:
        raise ValueError("initial parameters do not match the model spec")
    shards = partition(dataset, config.n_workers, config.seed)
    workers = [_Worker(s, params, config) for s in shards]
    server = _Server(params, config, test_set, on_iteration, verify_snapshots)
    log.info("training %s: %d workers, %d params, %d iterations",
             config.filter.value, config.n_workers, config.spec.num_params,
             config.max_iterations)
    run = _run_threaded if threaded and config.n_workers > 1 else _run_inline
    run(workers, server, config.max_iterations, verify_snapshots)
    return server.params, server.log


def with_filter(config: TrainConfig, kind, delta: float | None = None) -> TrainConfig:
    return replace(config, filter=FilterKind(kind),
                   delta=config.delta if delta is None else delta)
