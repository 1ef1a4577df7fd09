"""Update wire format and two-tier sample-weighted FedAvg."""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import (
    BadMagic,
    ChecksumMismatch,
    NoUpdates,
    ShapeMismatch,
    Truncated,
    VersionUnsupported,
    WireError,
)
from .model import ModelParams

MAGIC = 0xFED59A17
PROTOCOL_VERSION = 1
# magic, version, round, sender_id, num_features, num_classes, sample_count, loss_before, loss_after
HEADER = struct.Struct("<IBIIHHIdd")
TRAILER = struct.Struct("<I")
HEADER_SIZE = HEADER.size  # 37
TRAILER_SIZE = TRAILER.size  # 4


def encoded_size(num_features: int, num_classes: int) -> int:
    """Byte length of an encoded update for a d-feature, k-class model."""
    return HEADER_SIZE + 8 * (num_classes * num_features + num_classes) + TRAILER_SIZE


@dataclass(frozen=True, eq=False)
class UpdateMessage:
    round: int
    sender_id: int
    params: ModelParams
    sample_count: int
    loss_before: float = 0.0
    loss_after: float = 0.0
    protocol_version: int = PROTOCOL_VERSION

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if not (0 <= self.round < 2**32 and 0 <= self.sender_id < 2**32 and self.sample_count < 2**32):
            raise ValueError("round, sender_id and sample_count must fit in u32")
        if not (0 <= self.protocol_version < 256):
            raise ValueError("protocol_version must fit in u8")
        if self.params.num_features >= 2**16 or self.params.num_classes >= 2**16:
            raise ValueError("model dimensions must fit in u16")

    @property
    def checksum(self) -> int:
        return zlib.crc32(encode_update(self)[:-TRAILER_SIZE])

    def __eq__(self, other):
        if not isinstance(other, UpdateMessage):
            return NotImplemented
        return (
            self.round == other.round
            and self.sender_id == other.sender_id
            and self.sample_count == other.sample_count
            and self.protocol_version == other.protocol_version
            and struct.pack("<dd", self.loss_before, self.loss_after)
            == struct.pack("<dd", other.loss_before, other.loss_after)
            and self.params == other.params
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class RegionalUpdate:
    region_id: Hashable
    params: ModelParams
    total_samples: int
    contributor_count: int
    round: int = 0


@dataclass(frozen=True)
class GlobalModel:
    round: int
    params: ModelParams

    @property
    def num_classes(self) -> int:
        return self.params.num_classes


def encode_update(msg: UpdateMessage) -> bytes:
    p = msg.params
    head = HEADER.pack(
        MAGIC,
        msg.protocol_version,
        msg.round,
        msg.sender_id,
        p.num_features,
        p.num_classes,
        msg.sample_count,
        msg.loss_before,
        msg.loss_after,
    )
    body = head + p.flatten().astype("<f8").tobytes()
    return body + TRAILER.pack(zlib.crc32(body))


def decode_update(data: bytes) -> UpdateMessage:
    data = bytes(data)
    if len(data) < HEADER_SIZE + TRAILER_SIZE:
        raise Truncated(f"{len(data)} bytes is shorter than the fixed header")
    magic, version, rnd, sender, d, k, count, lb, la = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic 0x{magic:08X}")
    if version != PROTOCOL_VERSION:
        raise VersionUnsupported(f"protocol version {version} not supported")
    expected = encoded_size(d, k)
    if len(data) < expected:
        raise Truncated(f"expected {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise WireError(f"{len(data) - expected} trailing bytes after message")
    (crc,) = TRAILER.unpack_from(data, expected - TRAILER_SIZE)
    if zlib.crc32(data[: expected - TRAILER_SIZE]) != crc:
        raise ChecksumMismatch("CRC-32 does not match message contents")
    try:
        payload = np.frombuffer(data, dtype="<f8", count=k * d + k, offset=HEADER_SIZE)
        params = ModelParams.from_flat(payload.astype(np.float64), d, k)
        return UpdateMessage(rnd, sender, params, count, lb, la, version)
    except ValueError as exc:
        raise WireError(f"checksum valid but contents invalid: {exc}") from exc


def fed_avg(updates: Sequence[tuple[ModelParams, int]]) -> ModelParams:
    """Weighted elementwise mean, summed in the given order.

    Callers that need bitwise reproducibility pass updates sorted by sender.
    """
    updates = list(updates)
    if not updates:
        raise NoUpdates("fed_avg needs at least one update")
    shape = updates[0][0].shape
    total = 0
    acc = np.zeros(updates[0][0].size)
    for params, weight in updates:
        if params.shape != shape:
            raise ShapeMismatch(f"update shape {params.shape} differs from {shape}")
        if weight < 1:
            raise ValueError("aggregation weights must be >= 1")
        acc += weight * params.flatten()
        total += weight
    acc /= total
    if len(updates) == 1 or all(u[0] == updates[0][0] for u in updates[1:]):
        # weighted mean of identical vectors is the vector itself, exactly
        return updates[0][0]
    k, d = shape
    return ModelParams.from_flat(acc, d, k)


def regional_aggregate(region_id, updates: Iterable[UpdateMessage]) -> RegionalUpdate:
    """Driver-tier FedAvg over a region's delivered client updates."""
    msgs = sorted(updates, key=lambda m: m.sender_id)
    if not msgs:
        raise NoUpdates(f"region {region_id!r} received no updates")
    rounds = {m.round for m in msgs}
    if len(rounds) != 1:
        raise ValueError(f"updates from mixed rounds {sorted(rounds)}")
    params = fed_avg([(m.params, m.sample_count) for m in msgs])
    total = sum(m.sample_count for m in msgs)
    return RegionalUpdate(region_id, params, total, len(msgs), msgs[0].round)


def global_aggregate(regionals: Iterable[RegionalUpdate]) -> GlobalModel:
    """Server-tier FedAvg over regional results, weighted by their sample totals."""
    regs = sorted(regionals, key=lambda r: r.region_id)
    if not regs:
        raise NoUpdates("global server received no regional updates")
    rounds = {r.round for r in regs}
    if len(rounds) != 1:
        raise ValueError(f"regional updates from mixed rounds {sorted(rounds)}")
    params = fed_avg([(r.params, r.total_samples) for r in regs])
    return GlobalModel(regs[0].round, params)


def regional_message(reg: RegionalUpdate, sender_id: int, loss_before: float = 0.0,
                     loss_after: float = 0.0) -> UpdateMessage:
    """Envelope a regional result for the driver-to-server hop."""
    return UpdateMessage(reg.round, sender_id, reg.params, reg.total_samples, loss_before, loss_after)


def weighted_mean(values: Iterable[tuple[float, int]]) -> float:
    num = den = 0
    for v, w in values:
        num += v * w
        den += w
    return num / den if den else math.nan
