"""Analytic communication cost model for push/pull traffic.

Sizes are in bytes and MB means 10**6 bytes. Each worker has its own link to
the server; pushes and pulls are serialized over that link.
"""
from __future__ import annotations

from dataclasses import dataclass

from .filters import ENTRY_BYTES, HEADER_BYTES

BYTES_PER_VALUE = 4
MB = 10 ** 6


@dataclass(frozen=True)
class LinkModel:
    bandwidth: float
    per_message_latency: float = 0.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.per_message_latency < 0:
            raise ValueError("latency must be nonnegative")

    def transfer_seconds(self, nbytes: float) -> float:
        return self.per_message_latency + 8.0 * nbytes / self.bandwidth


GBPS_1 = LinkModel(1e9)
GBPS_10 = LinkModel(1e10)


@dataclass(frozen=True)
class IterationTiming:
    compute_seconds: float
    push_seconds: float
    pull_seconds: float

    @property
    def communication_seconds(self) -> float:
        return self.push_seconds + self.pull_seconds

    @property
    def total_seconds(self) -> float:
        return self.compute_seconds + self.push_seconds + self.pull_seconds


def dense_bytes(num_params: int, bytes_per_value: int = BYTES_PER_VALUE) -> int:
    if num_params < 0 or bytes_per_value < 0:
        raise ValueError("counts must be nonnegative")
    return num_params * bytes_per_value


def sparse_bytes(num_entries: int) -> int:
    """Size of one sparse message on the wire: header plus (index, value) pairs."""
    if num_entries < 0:
        raise ValueError("entry count must be nonnegative")
    return HEADER_BYTES + num_entries * ENTRY_BYTES


def iteration_time(compute_seconds: float, push_bytes: float, pull_bytes: float,
                   link: LinkModel) -> IterationTiming:
    if min(compute_seconds, push_bytes, pull_bytes) < 0:
        raise ValueError("timing inputs must be nonnegative")
    return IterationTiming(compute_seconds, link.transfer_seconds(push_bytes),
                           link.transfer_seconds(pull_bytes))


def speedup_ratio(baseline: IterationTiming, candidate: IterationTiming) -> float:
    if candidate.total_seconds <= 0:
        raise ZeroDivisionError("candidate timing has zero total time")
    return baseline.total_seconds / candidate.total_seconds


def communication_reduction(baseline: IterationTiming, candidate: IterationTiming) -> float:
    if candidate.communication_seconds <= 0:
        raise ZeroDivisionError("candidate timing has zero communication time")
    return baseline.communication_seconds / candidate.communication_seconds
