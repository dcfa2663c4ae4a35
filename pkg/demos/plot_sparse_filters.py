"""
Dropping small updates, with and without a residual
===================================================

Three push filters decide which gradient coordinates a worker sends.
RAW sends everything. DSU drops anything at or below the threshold and
forgets it. ASU keeps what it dropped and adds it to the next update.
"""

import numpy as np

from asutrain import FilterState, densify, drop_fraction, filter_push
from asutrain.filters import decode, encode

rng = np.random.default_rng(0)
n, delta = 1000, 0.5

states = {k: FilterState.new(k, delta, n) for k in ("RAW", "DSU", "ASU")}
sent = {k: np.zeros(n) for k in states}
dropped = {k: [] for k in states}
generated = np.zeros(n)

# feed the same stream of small updates through each filter
for _ in range(100):
    u = rng.normal(scale=0.2, size=n)
    generated += u
    for k in states:
        push, states[k] = filter_push(states[k], u)
        sent[k] += densify(push)
        dropped[k].append(drop_fraction(push))

for k in states:
    lost = np.abs(generated - sent[k]).sum()
    print(f"{k}: mean drop fraction {np.mean(dropped[k]):.3f}"
          f"  mass not delivered {lost:10.3f}")

# ASU loses nothing: what was not sent is exactly what sits in the residual
print("ASU sent + residual == generated:",
      np.allclose(sent["ASU"] + states["ASU"].residual, generated, atol=1e-12))

# a push travels as a 24-byte header plus 8 bytes per entry
push, _ = filter_push(states["ASU"], rng.normal(scale=0.2, size=n))
blob = encode(push, worker_id=3, iteration=101)
wid, it, back = decode(blob)
print(f"{len(push)} entries -> {len(blob)} bytes; decoded worker {wid}, iteration {it}")
