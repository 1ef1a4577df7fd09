"""Named experiment scenarios layered on top of the default setup.

stale-fleet
    40% of robots hold only classes that a warm-started global model
    already fits; the rest hold every class. Used for gating A/B runs.
knowledge-transfer
    One robot never sees a particular class; we measure how well the model
    it receives from the server recognises that class anyway.
drift
    A new class appears mid-run in two regions (unless an event feed is
    configured, in which case the feed is used as-is).
"""

from __future__ import annotations

from dataclasses import replace
from typing import TYPE_CHECKING

import numpy as np

from .config import TAG_SCENARIO, derive_seed
from .data import DriftEvent, Partition, _equal_split
from .metrics import evaluate_global
from .model import DataShard, init_params, train_local
from .protocol import fed_avg

if TYPE_CHECKING:
    from .engine import Setup, Simulation

STALE_FRACTION = 0.4
WARM_ROUNDS = 20
KT_CLIENT = 0
KT_CLASS = 7
DRIFT_ROUND = 30
DRIFT_REGIONS = 2
DRIFT_SAMPLES_PER_CLIENT = 20


def apply(name: str, setup: "Setup") -> None:
    try:
        hook = _SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}") from None
    hook(setup)
    setup.extras.setdefault("name", name)


def _stale_fleet(setup: "Setup") -> None:
    cfg = setup.config
    state = setup.state
    part = state.partition
    k = part.num_classes
    n_clients = len(part.shards)
    rng = np.random.default_rng(derive_seed(cfg.seed, TAG_SCENARIO, 1))
    stale = np.sort(rng.choice(n_clients, size=int(round(STALE_FRACTION * n_clients)), replace=False))
    stale_set = set(stale.tolist())
    fresh = [c for c in range(n_clients) if c not in stale_set]
    stale_classes = list(range(k // 2))

    train = DataShard.concat(part.shards, "train", k)
    order = rng.permutation(len(train))
    order = order[np.argsort(train.labels[order], kind="stable")]
    is_stale_class = np.isin(train.labels[order], stale_classes)
    per_client = len(train) // n_clients
    stale_pool = order[is_stale_class]
    take = min(len(stale_pool), per_client * len(stale))
    # give stale robots their share of stale-class rows; everything else goes to the rest
    stale_rows = stale_pool[rng.permutation(len(stale_pool))[:take]]
    stale_rows = stale_rows[np.argsort(train.labels[stale_rows], kind="stable")]
    rest = np.setdiff1d(order, stale_rows, assume_unique=True)
    rest = rest[np.argsort(train.labels[rest], kind="stable")]
    stale_parts = _equal_split(stale_rows, len(stale)) if len(stale) else []
    fresh_parts = _equal_split(rest, len(fresh)) if fresh else []
    rows: dict[int, np.ndarray] = {}
    for cid, p in zip(stale.tolist(), stale_parts):
        rows[cid] = p
    for cid, p in zip(fresh, fresh_parts):
        rows[cid] = p
    shards = tuple(train.subset(rows[c]).with_client(c) for c in range(n_clients))
    part = Partition(part.mode, shards, part.test_set, part.alpha, k)

    # warm start: plain FedAvg among the stale robots only, off the books
    g = init_params(state.global_params.num_features, k)
    for r in range(1, WARM_ROUNDS + 1):
        ups = []
        for cid in stale.tolist():
            tcfg = replace(cfg.train, rng_seed=derive_seed(cfg.seed, TAG_SCENARIO, 2, r, cid))
            trained, _ = train_local(g, shards[cid], tcfg)
            ups.append((trained, len(shards[cid])))
        g = fed_avg(ups)

    setup.state = replace(state, partition=part, global_params=g)
    setup.extras.update(
        stale_clients=stale.tolist(),
        stale_classes=stale_classes,
        warm_rounds=WARM_ROUNDS,
        warm_accuracy=evaluate_global(g, part.test_set).accuracy,
    )


def _knowledge_transfer(setup: "Setup") -> None:
    part = setup.state.partition
    cls = KT_CLASS if KT_CLASS < part.num_classes else part.num_classes - 1
    shard = part.shards[KT_CLIENT]
    keep = np.flatnonzero(shard.labels != cls)
    shards = list(part.shards)
    shards[KT_CLIENT] = shard.subset(keep)
    setup.state = replace(setup.state, partition=replace(part, shards=tuple(shards)))
    setup.extras.update(client=KT_CLIENT, withheld_class=cls,
                        withheld_samples=int(len(shard) - len(keep)))

    def observe(sim: "Simulation") -> dict:
        held = sim.state.held[KT_CLIENT]
        test = sim.state.partition.test_set
        client_shard = sim.state.partition.shards[KT_CLIENT]
        out = {
            "client_trained_on_class": bool(np.any(client_shard.labels == cls)),
            "client_recall_on_class": None,
        }
        if held is not None:
            out["client_recall_on_class"] = evaluate_global(held, test).per_class_recall[cls]
        return out

    setup.observers.append(observe)


def _drift(setup: "Setup") -> None:
    if setup.events:
        return
    k = setup.state.partition.num_classes
    regions = sorted(setup.state.assignment.drivers)[:DRIFT_REGIONS]
    setup.events = [DriftEvent(DRIFT_ROUND, k, tuple(regions), DRIFT_SAMPLES_PER_CLIENT)]
    setup.extras.update(events=[e.to_json() for e in setup.events])


_SCENARIOS = {
    "stale-fleet": _stale_fleet,
    "knowledge-transfer": _knowledge_transfer,
    "drift": _drift,
}
