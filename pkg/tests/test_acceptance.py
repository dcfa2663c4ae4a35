"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also collected into the terminal summary of any pytest run.
"""
import time

import numpy as np
import pytest

from asutrain.agemodel import ModelSpec, batch_gradient, batch_loss, init_model
from asutrain.data import SyntheticAgeDataset, generate_synthetic, synthetic_records
from asutrain.filters import FilterState, densify, filter_push
from asutrain.label_dist import AgeClassSet, kl_loss, kl_loss_gradient, softmax
from asutrain.metrics import age_group_accuracy, mae
from asutrain.netmodel import (GBPS_1, GBPS_10, LinkModel, communication_reduction, dense_bytes,
                               iteration_time, sparse_bytes, speedup_ratio)
from asutrain.ps import TrainConfig, train, with_filter
from asutrain.stream import load_histogram, run_demographics

from acceptance_report import report
from oracles import sequential_sgd


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)


def _central(f, x, h):
    g = np.zeros_like(x)
    for i in range(x.size):
        p, m = x.copy(), x.copy()
        p.flat[i] += h
        m.flat[i] -= h
        g.flat[i] = (f(p) - f(m)) / (2 * h)
    return g


def test_criterion_1_gradient_correctness():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst_loss = worst_model = 0.0
    n_instances = 120
    for _ in range(n_instances):
        c = int(rng.integers(2, 51))
        label = softmax(rng.normal(size=c) * 2)
        logits = rng.normal(size=c) * 3
        num = _central(lambda z: kl_loss(label, z), logits, 1e-5)
        worst_loss = max(worst_loss, _rel(kl_loss_gradient(label, logits), num))

        while True:
            d = int(rng.integers(1, 8))
            hidden = tuple(int(h) for h in rng.integers(2, 10, size=rng.integers(0, 3)))
            spec = ModelSpec(d, hidden, int(rng.integers(2, 16)), seed=int(rng.integers(1 << 30)))
            if spec.num_params <= 300:
                break
        params = init_model(spec) + rng.normal(scale=0.1, size=spec.num_params)
        X = rng.normal(size=(int(rng.integers(1, 6)), d))
        Y = softmax(rng.normal(size=(len(X), spec.c)) * 2)
        num = _central(lambda p: batch_loss(p, spec, X, Y), params, 1e-6)
        worst_model = max(worst_model, _rel(batch_gradient(params, spec, X, Y), num))
    elapsed = time.perf_counter() - start
    ok = worst_loss <= 1e-5 and worst_model <= 1e-4 and elapsed < 10
    report(1, ok, f"{n_instances} instances, worst rel err loss layer {worst_loss:.2e} "
                  f"(<= 1e-5), model {worst_model:.2e} (<= 1e-4), {elapsed:.2f}s (< 10s)")


def test_criterion_2_asu_conservation():
    worst = 0.0
    trials = 5
    for trial in range(trials):
        rng = np.random.default_rng(trial)
        n = 64
        delta = float(rng.uniform(0.0, 1.5))
        state = FilterState.new("ASU", delta, n)
        pushed, generated = np.zeros(n), np.zeros(n)
        for _ in range(1000):
            u = rng.normal(size=n) * rng.uniform(0.01, 2.0)
            generated += u
            push, state = filter_push(state, u)
            pushed += densify(push)
        worst = max(worst, float(np.max(np.abs(pushed + state.residual - generated))))
    report(2, worst <= 1e-12,
           f"{trials} trials x 1000 pushes, max |pushed + residual - generated| = {worst:.2e}")


@pytest.fixture(scope="module")
def small_task():
    return generate_synthetic(1200, 8, AgeClassSet(1, 30), seed=11)


def _body(log):
    return "\n".join(ln for ln in log.to_csv().splitlines() if not ln.startswith("#"))


def test_criterion_3_filters_equal_at_zero_delta(small_task):
    tr, te = small_task
    base = TrainConfig(ModelSpec(8, (16,), 30, seed=3), n_workers=4, filter="RAW", delta=0.0,
                       lr=0.2, batch_size=16, max_iterations=500, eval_every=50, seed=1)
    logs = {k: train(with_filter(base, k, 0.0), tr, te)[1] for k in ("RAW", "DSU", "ASU")}
    bodies = {k: _body(v) for k, v in logs.items()}
    ok = bodies["RAW"] == bodies["DSU"] == bodies["ASU"] and len(logs["RAW"].rows) == 500
    report(3, ok, "RAW, DSU, ASU logs at delta=0 (n=4, 500 iterations) are "
                  + ("byte-identical" if ok else "different"))


def test_criterion_4_threaded_matches_sequential(small_task):
    tr, _ = small_task
    cfg = TrainConfig(ModelSpec(8, (16,), 30, seed=3), n_workers=4, filter="RAW", delta=0.0,
                      lr=0.2, batch_size=16, max_iterations=200, eval_every=200, seed=1)
    traj = {}
    train(cfg, tr, threaded=True, on_iteration=lambda t, p: traj.__setitem__(t, p.copy()))
    worst = max(float(np.max(np.abs(traj[t] - ref))) for t, ref in sequential_sgd(cfg, tr))
    report(4, worst <= 1e-12 and len(traj) == 200,
           f"threaded n=4 RAW vs sequential reference over 200 iterations, "
           f"max |diff| = {worst:.2e}")


def test_criterion_5_model_quality():
    start = time.perf_counter()
    source = SyntheticAgeDataset(5000, 32, AgeClassSet(1, 70), theta=1.0, noise=0.5, seed=0)
    tr, te = source.generate()
    base = TrainConfig(ModelSpec(32, (64,), 70, seed=0), n_workers=4, filter="RAW", delta=6e-2,
                       lr=0.2, batch_size=32, max_iterations=2000, eval_every=100, seed=0)
    logs = {k: train(with_filter(base, k), tr, te)[1] for k in ("RAW", "DSU", "ASU")}
    elapsed = time.perf_counter() - start
    raw, dsu, asu = (logs[k].final_test_loss for k in ("RAW", "DSU", "ASU"))
    drop = logs["ASU"].mean_drop_fraction()
    gap = abs(asu - raw) / raw
    ok = drop >= 0.9 and gap <= 0.05 and dsu > asu and elapsed < 300
    report(5, ok, f"delta=0.06: ASU drops {drop:.3f} (>= 0.9); test loss RAW {raw:.4f}, "
                  f"ASU {asu:.4f} ({100 * gap:.2f}% from RAW, <= 5%), DSU {dsu:.4f} (> ASU); "
                  f"{elapsed:.1f}s (< 300s)")


def test_criterion_6_byte_accounting():
    dense = dense_bytes(135_000_000, 4)
    sparse = sparse_bytes(round(0.012 * 135_000_000))
    ok = dense == 540_000_000 and 1e6 <= sparse < 1e8 and sparse == 24 + 8 * 1_620_000
    report(6, ok, f"dense_bytes(135M, 4) = {dense}; sparse_bytes(1.62M entries) = "
                  f"{sparse / 1e6:.2f} MB (band 11-15 MB, same order of magnitude)")


def test_criterion_7_speedup_ordering():
    compute = 2.0
    fast, slow = {}, {}
    for name, link in (("1Gbps", GBPS_1), ("10Gbps", GBPS_10)):
        assert link.per_message_latency == 0.0
        raw = iteration_time(compute, 540e6, 540e6, link)
        asu = iteration_time(compute, 11e6, 15e6, link)
        fast[name] = speedup_ratio(raw, asu)
        slow[name] = communication_reduction(raw, asu)
    ratio = 1080e6 / 26e6
    ok = (all(abs(slow[k] - ratio) <= 1e-9 * ratio for k in slow)
          and fast["1Gbps"] > fast["10Gbps"] > 1.0
          and ratio >= 28 and ratio >= 16
          and abs(speedup_ratio(iteration_time(0, 1, 1, LinkModel(1e9)),
                                iteration_time(0, 1, 1, LinkModel(1e9))) - 1) < 1e-15)
    report(7, ok, f"comm reduction {slow['1Gbps']:.2f}x (byte ratio {ratio:.2f}, bounds 28x and "
                  f"16x); speedup 1 Gbps {fast['1Gbps']:.2f} > 10 Gbps {fast['10Gbps']:.2f}")


def test_criterion_8_metrics():
    examples = [
        mae([1, 2, 3], [1, 2, 3]) == 0.0,
        mae([30, 40], [25, 43]) == 4.0,
        mae([10], [12]) == 2.0,
        age_group_accuracy([30, 40, 50], [30, 40, 50], 5) == 1.0,
        age_group_accuracy([30], [33], 5) == 0.0,
        age_group_accuracy([30], [33], 10) == 1.0,
    ]
    rng = np.random.default_rng(8)
    gaps = [1, 2.5, 5, 7.5, 10, 15, 20, 40]
    monotone = 0
    for _ in range(1000):
        n = int(rng.integers(1, 200))
        truths = rng.integers(1, 102, size=n).astype(float)
        preds = truths + rng.normal(scale=rng.uniform(0.5, 30), size=n)
        acc = [age_group_accuracy(preds, truths, g) for g in gaps]
        monotone += all(a <= b for a, b in zip(acc, acc[1:]))
    ok = all(examples) and monotone == 1000
    report(8, ok, f"{sum(examples)}/{len(examples)} unit examples exact; accuracy monotone in "
                  f"gap on {monotone}/1000 random datasets")


def test_criterion_9_stream_determinism(tmp_path):
    classes = AgeClassSet(1, 70)
    source = SyntheticAgeDataset(2000, 16, classes, seed=4)
    tr, te = source.generate()
    cfg = TrainConfig(ModelSpec(16, (), 70, seed=1), n_workers=2, filter="ASU", delta=1e-2,
                      lr=0.5, batch_size=32, max_iterations=200, eval_every=200, seed=0)
    params, _ = train(cfg, tr, te)
    records, _ = synthetic_records(source, 10_000, rate=200.0, seed=9)
    a = run_demographics(params, cfg.spec, classes, records, tmp_path / "a", 1.0, 10)
    b = run_demographics(params, cfg.spec, classes, records, tmp_path / "b", 1.0, 10)
    ha = (tmp_path / "a" / "histogram.csv").read_bytes()
    hb = (tmp_path / "b" / "histogram.csv").read_bytes()
    total = load_histogram(tmp_path / "a" / "histogram.csv", 10, 1).total
    ok = ha == hb and total == a.accepted == b.accepted == 10_000
    report(9, ok, f"10000-record stream scored twice: histogram files "
                  f"{'identical' if ha == hb else 'differ'}; total {total} == accepted {a.accepted}")
