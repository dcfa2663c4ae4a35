"""
How much does sparsity buy on a given network link?
===================================================

Transfer time is latency plus bytes over bandwidth. With a fixed compute
time per iteration, the gain from shrinking messages is largest when the
link is slow.
"""

from asutrain import LinkModel, dense_bytes, iteration_time, sparse_bytes, speedup_ratio
from asutrain.netmodel import communication_reduction

P = 135_000_000
dense = dense_bytes(P)
sparse = sparse_bytes(round(0.012 * P))
print(f"dense message {dense / 1e6:.0f} MB, sparse message at 1.2% {sparse / 1e6:.2f} MB")

compute = 2.0
for gbps in (0.1, 1, 10, 100):
    link = LinkModel(gbps * 1e9)
    raw = iteration_time(compute, dense, dense, link)
    asu = iteration_time(compute, sparse, sparse, link)
    print(f"{gbps:6.1f} Gbps: RAW {raw.total_seconds:7.3f}s  ASU {asu.total_seconds:6.3f}s"
          f"  speedup {speedup_ratio(raw, asu):5.2f}"
          f"  comm reduction {communication_reduction(raw, asu):5.1f}x")

# a per-message latency puts a floor under communication time
slow_start = LinkModel(1e9, per_message_latency=0.05)
print("with 50 ms latency at 1 Gbps:",
      round(speedup_ratio(iteration_time(compute, dense, dense, slow_start),
                          iteration_time(compute, sparse, sparse, slow_start)), 2))
