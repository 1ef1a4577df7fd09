"""Synthetic Gaussian-cluster population, client partitioning and drift events."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    GeometryError,
    NonContiguousClass,
    ParseError,
    SchemaError,
    TooManyClients,
    UnknownRegion,
)
from .model import DataShard

TEST_FRACTION = 0.2
MAX_CENTER_TRIES = 10_000


@dataclass(frozen=True)
class PopulationConfig:
    num_classes: int = 12
    num_clients: int = 150
    num_features: int = 8
    samples_per_class: int = 500
    class_separation: float = 5.0
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("num_classes", "num_clients", "num_features", "samples_per_class"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not self.class_separation > 0 or not self.noise_sigma > 0:
            raise ValueError("class_separation and noise_sigma must be positive")


@dataclass(frozen=True)
class Partition:
    mode: str
    shards: tuple[DataShard, ...]
    test_set: DataShard
    alpha: float | None = None
    num_classes: int = 0

    def __post_init__(self):
        object.__setattr__(self, "shards", tuple(self.shards))

    @property
    def train_size(self) -> int:
        return sum(len(s) for s in self.shards)


@dataclass(frozen=True)
class DriftEvent:
    round: int
    new_class_label: int
    affected_regions: tuple[int, ...] = field(default_factory=tuple)
    samples_per_affected_client: int = 1

    def __post_init__(self):
        object.__setattr__(self, "affected_regions", tuple(self.affected_regions))
        if self.round < 0 or self.new_class_label < 0:
            raise SchemaError("round and new_class_label must be nonnegative")
        if self.samples_per_affected_client < 1:
            raise SchemaError("samples_per_affected_client must be positive")

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "new_class_label": self.new_class_label,
            "affected_regions": list(self.affected_regions),
            "samples_per_affected_client": self.samples_per_affected_client,
        }


def _place_center(rng: np.random.Generator, existing: list[np.ndarray], d: int, separation: float) -> np.ndarray:
    # Centers live on the sphere of radius `separation`, so every class sits on
    # the convex hull and is linearly separable from the others.
    for _ in range(MAX_CENTER_TRIES):
        v = rng.standard_normal(d)
        norm = np.linalg.norm(v)
        if norm == 0:
            continue
        c = v * (separation / norm)
        if all(np.linalg.norm(c - e) >= separation for e in existing):
            return c
    raise GeometryError(
        f"could not place center {len(existing)} at separation {separation} in {d} dimensions"
    )


def place_centers(num_classes: int, num_features: int, separation: float, rng) -> np.ndarray:
    centers: list[np.ndarray] = []
    for _ in range(num_classes):
        centers.append(_place_center(rng, centers, num_features, separation))
    return np.array(centers)


def _split_counts(n: int) -> tuple[int, int]:
    n_test = int(round(n * TEST_FRACTION))
    return n - n_test, n_test


def generate_population(cfg: PopulationConfig) -> tuple[DataShard, DataShard, np.ndarray]:
    """Draw Gaussian class clusters and split them 80/20 (stratified) into train/test."""
    rng = np.random.default_rng([cfg.seed, 0x9E37])
    centers = place_centers(cfg.num_classes, cfg.num_features, cfg.class_separation, rng)
    Xtr, ytr, Xte, yte = [], [], [], []
    n_train, _ = _split_counts(cfg.samples_per_class)
    for c in range(cfg.num_classes):
        pts = centers[c] + cfg.noise_sigma * rng.standard_normal((cfg.samples_per_class, cfg.num_features))
        perm = rng.permutation(cfg.samples_per_class)
        Xtr.append(pts[perm[:n_train]])
        Xte.append(pts[perm[n_train:]])
        ytr.append(np.full(n_train, c))
        yte.append(np.full(cfg.samples_per_class - n_train, c))
    # interleave classes in the training pool so downstream slicing is unbiased
    Xtr = np.concatenate(Xtr)
    ytr = np.concatenate(ytr)
    mix = rng.permutation(len(ytr))
    train = DataShard(Xtr[mix], ytr[mix], "train", cfg.num_classes)
    test = DataShard(np.concatenate(Xte), np.concatenate(yte), "test", cfg.num_classes)
    return train, test, centers


def _equal_split(indices_by_label: np.ndarray, num_clients: int) -> list[np.ndarray]:
    # deal class-sorted samples round-robin: sizes differ by <= 1, classes stratified
    return [indices_by_label[i::num_clients] for i in range(num_clients)]


def partition(
    train: DataShard,
    num_clients: int,
    mode: str = "equal",
    seed: int = 0,
    alpha: float = 0.5,
    test_set: DataShard | None = None,
    num_classes: int | None = None,
) -> Partition:
    """Split ``train`` across ``num_clients`` shards (client ids ``0..num_clients-1``).

    ``mode="equal"`` gives class-stratified shards whose sizes differ by at
    most one; ``mode="dirichlet"`` draws each class's client proportions
    from a symmetric Dirichlet(``alpha``).
    """
    n = len(train)
    if num_clients < 1:
        raise ValueError("num_clients must be >= 1")
    if n == 0:
        raise ValueError("cannot partition an empty training set")
    if num_clients > n:
        raise TooManyClients(f"{num_clients} clients but only {n} samples")
    k = num_classes or train.num_classes or int(train.labels.max()) + 1
    rng = np.random.default_rng([seed, 0x5A17])

    if mode == "equal":
        perm = rng.permutation(n)
        by_label = perm[np.argsort(train.labels[perm], kind="stable")]
        parts = _equal_split(by_label, num_clients)
    elif mode == "dirichlet":
        if not alpha > 0:
            raise ValueError("dirichlet alpha must be positive")
        buckets: list[list[np.ndarray]] = [[] for _ in range(num_clients)]
        for c in range(k):
            idx = np.flatnonzero(train.labels == c)
            if idx.size == 0:
                continue
            idx = rng.permutation(idx)
            props = rng.dirichlet(np.full(num_clients, alpha))
            cuts = (np.cumsum(props)[:-1] * idx.size).astype(np.int64)
            for i, chunk in enumerate(np.split(idx, cuts)):
                buckets[i].append(chunk)
        parts = [np.sort(np.concatenate(b)) if b else np.empty(0, np.int64) for b in buckets]
    else:
        raise ValueError(f"unknown partition mode {mode!r}")

    shards = tuple(
        DataShard(train.features[p], train.labels[p], i, k) for i, p in enumerate(parts)
    )
    if test_set is None:
        test_set = DataShard(np.empty((0, train.num_features)), np.empty(0, np.int64), "test", k)
    return Partition(mode, shards, test_set, alpha if mode == "dirichlet" else None, k)


_EVENT_KEYS = {"round", "new_class_label", "affected_regions", "samples_per_affected_client"}


def _uint(obj, key: str, i: int) -> int:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise SchemaError(f"event {i}: {key!r} must be a nonnegative integer, got {v!r}")
    return v


def parse_event_feed(raw, num_classes: int | None = None, horizon: int | None = None) -> list[DriftEvent]:
    """Validate an already-decoded JSON feed (see :func:`load_event_feed`)."""
    if not isinstance(raw, list):
        raise SchemaError("event feed must be a JSON array")
    events = []
    for i, obj in enumerate(raw):
        if not isinstance(obj, dict):
            raise SchemaError(f"event {i}: expected an object")
        keys = set(obj)
        if keys - _EVENT_KEYS:
            raise SchemaError(f"event {i}: unknown fields {sorted(keys - _EVENT_KEYS)}")
        if _EVENT_KEYS - keys:
            raise SchemaError(f"event {i}: missing fields {sorted(_EVENT_KEYS - keys)}")
        regions = obj["affected_regions"]
        if not isinstance(regions, list):
            raise SchemaError(f"event {i}: 'affected_regions' must be an array")
        for r in regions:
            if isinstance(r, bool) or not isinstance(r, int) or r < 0:
                raise SchemaError(f"event {i}: region ids must be nonnegative integers")
        spc = _uint(obj, "samples_per_affected_client", i)
        if spc < 1:
            raise SchemaError(f"event {i}: samples_per_affected_client must be >= 1")
        rnd = _uint(obj, "round", i)
        if horizon is not None and rnd > horizon:
            raise SchemaError(f"event {i}: round {rnd} beyond experiment horizon {horizon}")
        events.append(DriftEvent(rnd, _uint(obj, "new_class_label", i), tuple(regions), spc))
    events.sort(key=lambda e: (e.round, e.new_class_label))
    if num_classes is not None:
        expected = num_classes
        for e in events:
            if e.new_class_label != expected:
                raise NonContiguousClass(
                    f"event at round {e.round} introduces class {e.new_class_label}; next class is {expected}"
                )
            expected += 1
    return events


def load_event_feed(path, num_classes: int | None = None, horizon: int | None = None) -> list[DriftEvent]:
    """Read a drift-event feed: a UTF-8 JSON array of event objects."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parse_event_feed(raw, num_classes, horizon)


def apply_drift(
    part: Partition,
    event: DriftEvent,
    centers: np.ndarray,
    cfg: PopulationConfig,
    regions: Mapping[int, Sequence[int]],
) -> tuple[Partition, np.ndarray]:
    """Introduce a new class: new center, samples for clients in the affected
    regions, and a proportional slice of test samples.

    ``regions`` maps region id to member client ids. Returns the new
    partition and the extended center matrix; inputs are not modified.
    """
    k = centers.shape[0]
    if event.new_class_label != k:
        raise NonContiguousClass(f"event introduces class {event.new_class_label}; next class is {k}")
    unknown = [r for r in event.affected_regions if r not in regions]
    if unknown:
        raise UnknownRegion(f"unknown region ids {unknown}")
    rng = np.random.default_rng([cfg.seed, 0xD21F, event.round, event.new_class_label])
    center = _place_center(rng, list(centers), centers.shape[1], cfg.class_separation)
    new_k = k + 1

    def draw(m: int) -> np.ndarray:
        return center + cfg.noise_sigma * rng.standard_normal((m, centers.shape[1]))

    affected = sorted({c for r in event.affected_regions for c in regions[r]})
    affected_set = set(affected)
    m = event.samples_per_affected_client
    draws = {c: draw(m) for c in affected}
    shards = []
    for s in part.shards:
        if s.client_id in affected_set:
            X = np.vstack([s.features, draws[s.client_id]])
            y = np.concatenate([s.labels, np.full(m, event.new_class_label)])
            shards.append(DataShard(X, y, s.client_id, new_k))
        else:
            shards.append(DataShard(s.features, s.labels, s.client_id, new_k))
    test = part.test_set
    n_new_test = max(1, int(round(len(test) / k))) if len(test) else 0
    if n_new_test:
        test = DataShard(
            np.vstack([test.features, draw(n_new_test)]),
            np.concatenate([test.labels, np.full(n_new_test, event.new_class_label)]),
            test.client_id,
            new_k,
        )
    else:
        test = DataShard(test.features, test.labels, test.client_id, new_k)
    return (
        Partition(part.mode, tuple(shards), test, part.alpha, new_k),
        np.vstack([centers, center]),
    )
