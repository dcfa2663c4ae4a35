"""Push-side update filters: RAW, DSU (drop) and ASU (drop + accumulate).

A filter splits the worker's update vector into entries pushed to the server
(``|u| > delta``) and entries withheld (``|u| <= delta``). ASU keeps the
withheld mass in a residual that is added to the next update before
thresholding; DSU throws it away; RAW pushes every nonzero entry.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

#: ``worker_id u32, iteration u64, entry_count u32, total_dims u64``
WIRE_HEADER = struct.Struct("<IQIQ")
WIRE_ENTRY = np.dtype([("index", "<u4"), ("value", "<f4")])
HEADER_BYTES = WIRE_HEADER.size
ENTRY_BYTES = WIRE_ENTRY.itemsize


class FilterKind(str, enum.Enum):
    RAW = "RAW"
    DSU = "DSU"
    ASU = "ASU"


@dataclass
class SparseUpdate:
    indices: np.ndarray
    values: np.ndarray
    total_dims: int

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValueError("indices and values must be 1-d and of equal length")

    def __len__(self) -> int:
        return len(self.indices)

    @classmethod
    def from_dict(cls, entries: dict, total_dims: int) -> "SparseUpdate":
        idx = sorted(entries)
        return cls(np.array(idx, dtype=np.int64),
                   np.array([entries[i] for i in idx], dtype=np.float64), total_dims)

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(v) for i, v in zip(self.indices, self.values)}


@dataclass
class FilterState:
    kind: FilterKind
    delta: float
    residual: np.ndarray = field(repr=False)

    @classmethod
    def new(cls, kind, delta: float, num_params: int) -> "FilterState":
        kind = FilterKind(kind)
        if delta < 0:
            raise ValueError(f"delta must be nonnegative, got {delta}")
        return cls(kind, float(delta), np.zeros(num_params))

    @property
    def effective_delta(self) -> float:
        return 0.0 if self.kind is FilterKind.RAW else self.delta


def filter_push(state: FilterState, update: np.ndarray) -> tuple[SparseUpdate, FilterState]:
    """Threshold ``update`` through ``state``; returns the push and the next state.

    The incoming state is not modified.
    """
    update = np.asarray(update, dtype=np.float64)
    if update.shape != state.residual.shape:
        raise ValueError(
            f"update has shape {update.shape}, filter expects {state.residual.shape}")
    if state.kind is FilterKind.ASU:
        effective = update + state.residual
    else:
        effective = update

    delta = state.effective_delta
    if delta == 0.0:
        keep = effective != 0.0
    else:
        keep = np.abs(effective) > delta
    idx = np.flatnonzero(keep)
    pushed = SparseUpdate(idx, effective[idx], len(effective))

    if state.kind is FilterKind.ASU:
        residual = np.where(keep, 0.0, effective)
    else:
        residual = state.residual
    return pushed, FilterState(state.kind, state.delta, residual)


def drop_fraction(pushed: SparseUpdate) -> float:
    if pushed.total_dims == 0:
        raise ValueError("drop fraction undefined for a zero-length update")
    return 1.0 - len(pushed) / pushed.total_dims


def densify(sparse: SparseUpdate) -> np.ndarray:
    if len(sparse) and (sparse.indices.min() < 0 or sparse.indices.max() >= sparse.total_dims):
        raise ValueError(
            f"corrupt sparse update: index out of range for {sparse.total_dims} dims")
    out = np.zeros(sparse.total_dims)
    out[sparse.indices] = sparse.values
    return out


def encode(sparse: SparseUpdate, worker_id: int, iteration: int) -> bytes:
    """Serialize to the little-endian wire format (values narrowed to f32)."""
    body = np.empty(len(sparse), dtype=WIRE_ENTRY)
    body["index"] = sparse.indices
    body["value"] = sparse.values
    return WIRE_HEADER.pack(worker_id, iteration, len(sparse), sparse.total_dims) + body.tobytes()


def decode(blob: bytes) -> tuple[int, int, SparseUpdate]:
    """Inverse of :func:`encode`; returns ``(worker_id, iteration, update)``."""
    if len(blob) < HEADER_BYTES:
        raise ValueError("truncated sparse update header")
    worker_id, iteration, count, total = WIRE_HEADER.unpack_from(blob, 0)
    if len(blob) != HEADER_BYTES + count * ENTRY_BYTES:
        raise ValueError(
            f"sparse update length {len(blob)} does not match entry count {count}")
    body = np.frombuffer(blob, dtype=WIRE_ENTRY, offset=HEADER_BYTES)
    indices = body["index"].astype(np.int64)
    if count and (np.any(np.diff(indices) <= 0) or indices[-1] >= total):
        raise ValueError("corrupt sparse update: indices not increasing or out of range")
    return worker_id, iteration, SparseUpdate(indices, body["value"].astype(np.float64), total)
