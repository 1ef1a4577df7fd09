"""Round-driven orchestration of the hierarchical federated fleet."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import scenarios
from .cluster import ClusterAssignment, RobotSite, form_groups, generate_sites, reassign_on_failure
from .config import (
    TAG_CLUSTER,
    TAG_NETWORK,
    TAG_PARTITION,
    TAG_POPULATION,
    TAG_REPEAT,
    TAG_TRAIN,
    ExperimentConfig,
    config_to_json,
    derive_seed,
)
from .data import DriftEvent, Partition, apply_drift, generate_population, load_event_feed, partition
from .errors import ShapeMismatch
from .gate import Decision, GateDecision, Reason, post_training_check, pre_training_check
from .metrics import EvalReport, evaluate_global
from .model import DataShard, ModelParams, TrainConfig, TrainStats, expand_classes, init_params, train_local
from .network import Link, NetworkModel, simulate_network
from .protocol import (
    RegionalUpdate,
    UpdateMessage,
    decode_update,
    encode_update,
    encoded_size,
    global_aggregate,
    regional_aggregate,
    regional_message,
    weighted_mean,
)

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "round", "participants", "skipped_pre", "skipped_post", "dropped_msgs",
    "bytes_up", "bytes_down", "compute_units", "global_loss", "global_accuracy",
)


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    participants: int = 0
    skipped_pre: int = 0
    skipped_post: int = 0
    dropped_msgs: int = 0
    bytes_up: int = 0
    bytes_down: int = 0
    compute_units: int = 0
    global_loss: float = float("nan")
    global_accuracy: float = float("nan")
    per_class_recall: tuple[float, ...] = ()
    num_classes: int = 0
    active_clients: int = 0
    regions_aggregated: int = 0
    mean_latency_ms: float | None = None
    skip_reasons: dict = field(default_factory=dict)
    drift_entry_recall: float | None = None

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        out["per_class_recall"] = list(self.per_class_recall)
        return out

    def csv_row(self) -> list[str]:
        return [repr(v) if isinstance(v, float) else str(v) for v in (getattr(self, c) for c in CSV_COLUMNS)]


@dataclass(frozen=True)
class SimState:
    """Everything that changes between rounds. Replaced wholesale by each round."""

    round: int
    global_params: ModelParams
    partition: Partition
    centers: np.ndarray
    assignment: ClusterAssignment
    held: tuple[ModelParams | None, ...]
    prior_skip: frozenset[int] = frozenset()
    offline: frozenset[int] = frozenset()


@dataclass
class Setup:
    """Static inputs derived from the config before the first round."""

    config: ExperimentConfig
    population_cfg: object
    sites: list[RobotSite]
    events: list[DriftEvent]
    state: SimState
    extras: dict = field(default_factory=dict)
    observers: list[Callable] = field(default_factory=list)


@dataclass(frozen=True)
class ClientOutcome:
    """Result of phases 2-6 for one client; merged in client-id order."""

    client_id: int
    decision: GateDecision | None = None
    unreached: bool = False
    bytes_down: int = 0
    compute_units: int = 0
    dropped: int = 0
    held: ModelParams | None = None
    upload: bytes | None = None
    upload_size: int = 0
    latencies: tuple[float, ...] = ()
    decided_dormant: bool = False
    stats: TrainStats | None = None


def client_train_seed(master: int, round_: int, client_id: int) -> int:
    return derive_seed(master, TAG_TRAIN, round_, client_id)


def build_setup(cfg: ExperimentConfig) -> Setup:
    """Population, partition, fleet layout and initial model for ``cfg``."""
    seed = cfg.seed
    pop_cfg = replace(cfg.population, seed=derive_seed(seed, TAG_POPULATION))
    train, test, centers = generate_population(pop_cfg)
    part = partition(
        train, pop_cfg.num_clients, cfg.partition_mode, derive_seed(seed, TAG_PARTITION),
        cfg.dirichlet_alpha, test, pop_cfg.num_classes,
    )
    cluster_seed = derive_seed(seed, TAG_CLUSTER)
    sites = generate_sites(pop_cfg.num_clients, cfg.groups, cluster_seed)
    assignment = form_groups(sites, cfg.groups, cluster_seed)
    initial = init_params(pop_cfg.num_features, pop_cfg.num_classes, "zeros")
    events = []
    if cfg.event_feed:
        events = load_event_feed(cfg.event_feed, pop_cfg.num_classes, cfg.rounds)
    state = SimState(0, initial, part, centers, assignment, (None,) * pop_cfg.num_clients)
    setup = Setup(cfg, pop_cfg, sites, events, state)
    if cfg.scenario:
        scenarios.apply(cfg.scenario, setup)
    return setup


class Simulation:
    """Executes rounds over a :class:`SimState`; the state itself is immutable."""

    def __init__(self, setup: Setup):
        self.setup = setup
        self.cfg = setup.config
        self.state = setup.state
        self.net = replace(self.cfg.network, seed=derive_seed(self.cfg.seed, TAG_NETWORK))
        self._pool = ThreadPoolExecutor(self.cfg.workers) if self.cfg.workers > 1 else None

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "Simulation":
        return cls(build_setup(cfg))

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    # phase 0/1 -----------------------------------------------------------

    def apply_boundary_events(self, state: SimState, r: int) -> tuple[SimState, list[float]]:
        """Driver failures and drift events scheduled for round ``r``."""
        assignment = state.assignment
        offline = set(state.offline)
        for f in self.cfg.driver_failures:
            if f.round == r and f.region in assignment.drivers:
                failed = assignment.drivers[f.region]
                log.info("round %d: driver %d of region %d failed", r, failed, f.region)
                assignment = reassign_on_failure(assignment, failed, self.setup.sites)
                offline.add(failed)
        part, centers, global_params = state.partition, state.centers, state.global_params
        entry_recalls = []
        for ev in self.setup.events:
            if ev.round != r:
                continue
            part, centers = apply_drift(part, ev, centers, self.setup.population_cfg, assignment.groups())
            global_params = expand_classes(global_params, part.num_classes)
            rep = evaluate_global(global_params, part.test_set)
            entry_recalls.append(rep.per_class_recall[ev.new_class_label])
            log.info("round %d: class %d introduced", r, ev.new_class_label)
        state = replace(state, assignment=assignment, offline=frozenset(offline),
                        partition=part, centers=centers, global_params=global_params)
        return state, entry_recalls

    # phases 2-6 per client -----------------------------------------------

    def _train_cfg(self, r: int, cid: int) -> TrainConfig:
        return replace(self.cfg.train, rng_seed=client_train_seed(self.cfg.seed, r, cid))

    def _broadcast(self, size: int, cid: int, r: int):
        return simulate_network(size, self.net, (Link.DOWN, cid), r)

    def client_round(self, state: SimState, r: int, cid: int) -> ClientOutcome:
        gate = self.cfg.gate
        shard = state.partition.shards[cid]
        g = state.global_params
        size = encoded_size(g.num_features, g.num_classes)
        latencies = []
        compute = 0
        bytes_down = 0
        held = state.held[cid]
        dormant = (
            gate.enabled and cid in state.prior_skip and held is not None and held.shape == g.shape
        )
        if dormant:
            # decide from the model already on board; fetch only if training is needed
            dec = pre_training_check(held, shard, gate)
            compute += dec.compute_units
            if not dec.participate:
                return ClientOutcome(cid, dec, compute_units=compute, held=held, decided_dormant=True)
            d = self._broadcast(size, cid, r)
            if not d.delivered:
                return ClientOutcome(cid, GateDecision(Decision.SKIP_PRE, Reason.UNREACHED), unreached=True,
                                     compute_units=compute, dropped=1, held=held)
            bytes_down += size
            latencies.append(d.latency_ms)
            held = g
        else:
            d = self._broadcast(size, cid, r)
            if not d.delivered:
                return ClientOutcome(cid, GateDecision(Decision.SKIP_PRE, Reason.UNREACHED), unreached=True,
                                     dropped=1, held=held)
            bytes_down += size
            latencies.append(d.latency_ms)
            held = g
            if len(shard) == 0:
                return ClientOutcome(cid, GateDecision(Decision.SKIP_PRE, Reason.NO_DATA), bytes_down=bytes_down,
                                     held=held, latencies=tuple(latencies))
            if gate.enabled:
                dec = pre_training_check(g, shard, gate)
                compute += dec.compute_units
                if not dec.participate:
                    return ClientOutcome(cid, dec, bytes_down=bytes_down, compute_units=compute, held=held,
                                         latencies=tuple(latencies))

        trained, stats = train_local(g, shard, self._train_cfg(r, cid))
        compute += stats.compute_units
        if gate.enabled:
            post = post_training_check(g, trained, stats, gate)
            if not post.participate:
                return ClientOutcome(cid, post, bytes_down=bytes_down, compute_units=compute, held=held,
                                     latencies=tuple(latencies), stats=stats)
        else:
            post = GateDecision(Decision.PARTICIPATE)
        msg = UpdateMessage(r, cid, trained, len(shard), stats.loss_before, stats.loss_after)
        wire = encode_update(msg)
        d = simulate_network(len(wire), self.net, (Link.UP, cid), r)
        if d.delivered:
            latencies.append(d.latency_ms)
        return ClientOutcome(
            cid, post, bytes_down=bytes_down, compute_units=compute, held=held,
            upload=wire if d.delivered else None, upload_size=len(wire), dropped=0 if d.delivered else 1,
            latencies=tuple(latencies), stats=stats,
        )

    # full round ----------------------------------------------------------

    def run_round(self, state: SimState) -> tuple[SimState, RoundMetrics]:
        r = state.round + 1
        state, entry_recalls = self.apply_boundary_events(state, r)
        g = state.global_params
        active = sorted(state.assignment.membership)
        if self._pool is not None:
            outcomes = list(self._pool.map(lambda c: self.client_round(state, r, c), active))
        else:
            outcomes = [self.client_round(state, r, c) for c in active]

        participants = skipped_pre = skipped_post = dropped = 0
        bytes_up = bytes_down = compute = 0
        latencies: list[float] = []
        reasons: dict[str, int] = {}
        held = list(state.held)
        prior_skip = set()
        inbox: dict[int, list[UpdateMessage]] = {}
        for o in outcomes:
            bytes_down += o.bytes_down
            compute += o.compute_units
            dropped += o.dropped
            latencies.extend(o.latencies)
            held[o.client_id] = o.held
            kind = o.decision.kind if o.decision else Decision.PARTICIPATE
            if kind is Decision.SKIP_PRE:
                skipped_pre += 1
                if self.cfg.gate.enabled and not o.unreached:
                    prior_skip.add(o.client_id)
            elif kind is Decision.SKIP_POST:
                skipped_post += 1
            else:
                participants += 1
            if o.decision is not None and o.decision.reason is not None:
                key = o.decision.reason.value
                reasons[key] = reasons.get(key, 0) + 1
            if o.upload is not None:
                bytes_up += len(o.upload)
                msg = decode_update(o.upload)
                if msg.params.shape != g.shape:
                    raise ShapeMismatch(f"stale update from client {msg.sender_id} in round {r}")
                inbox.setdefault(state.assignment.membership[o.client_id], []).append(msg)

        regionals: list[RegionalUpdate] = []
        for region in sorted(inbox):
            reg = regional_aggregate(region, inbox[region])
            lb = weighted_mean((m.loss_before, m.sample_count) for m in inbox[region])
            la = weighted_mean((m.loss_after, m.sample_count) for m in inbox[region])
            wire = encode_update(regional_message(reg, region, lb, la))
            d = simulate_network(len(wire), self.net, (Link.RELAY, region), r)
            if not d.delivered:
                dropped += 1
                continue
            bytes_up += len(wire)
            latencies.append(d.latency_ms)
            got = decode_update(wire)
            regionals.append(RegionalUpdate(got.sender_id, got.params, got.sample_count,
                                            reg.contributor_count, got.round))
        if regionals:
            g = global_aggregate(regionals).params

        ev = evaluate_global(g, state.partition.test_set)
        metrics = RoundMetrics(
            round=r,
            participants=participants,
            skipped_pre=skipped_pre,
            skipped_post=skipped_post,
            dropped_msgs=dropped,
            bytes_up=bytes_up,
            bytes_down=bytes_down,
            compute_units=compute,
            global_loss=ev.loss,
            global_accuracy=ev.accuracy,
            per_class_recall=ev.per_class_recall,
            num_classes=g.num_classes,
            active_clients=len(active),
            regions_aggregated=len(regionals),
            mean_latency_ms=float(np.mean(latencies)) if latencies else None,
            skip_reasons=dict(sorted(reasons.items())),
            drift_entry_recall=entry_recalls[-1] if entry_recalls else None,
        )
        new_state = replace(state, round=r, global_params=g, held=tuple(held), prior_skip=frozenset(prior_skip))
        return new_state, metrics

    def step(self) -> RoundMetrics:
        self.state, m = self.run_round(self.state)
        return m

    def evaluate(self) -> EvalReport:
        return evaluate_global(self.state.global_params, self.state.partition.test_set)


def run_single(cfg: ExperimentConfig, progress: Callable[[RoundMetrics], None] | None = None) -> dict:
    """Run one seeded experiment and return its report dictionary."""
    sim = Simulation.from_config(cfg)
    try:
        initial = sim.evaluate()
        rounds = []
        for _ in range(cfg.rounds):
            m = sim.step()
            rounds.append(m)
            if progress:
                progress(m)
        final = sim.evaluate()
        extras = dict(sim.setup.extras)
        for obs in sim.setup.observers:
            extras.update(obs(sim))
    finally:
        sim.close()
    totals = {
        "bytes_up": sum(m.bytes_up for m in rounds),
        "bytes_down": sum(m.bytes_down for m in rounds),
        "compute_units": sum(m.compute_units for m in rounds),
        "participants": sum(m.participants for m in rounds),
        "skipped_pre": sum(m.skipped_pre for m in rounds),
        "skipped_post": sum(m.skipped_post for m in rounds),
        "dropped_msgs": sum(m.dropped_msgs for m in rounds),
        "server_aggregated_inputs": sum(m.regions_aggregated for m in rounds),
    }
    return {
        "config": config_to_json(cfg),
        "initial": initial.to_json(),
        "rounds": [m.to_json() for m in rounds],
        "final": final.to_json(),
        "totals": totals,
        "scenario": extras,
        "_metrics": rounds,
    }


def run_experiment(cfg: ExperimentConfig, out_dir=None, progress=None, write=True) -> dict:
    """Run ``cfg.repeats`` seeded repeats; write metrics CSV and report JSON.

    Repeat 0 uses the master seed itself; later repeats derive theirs from
    it. The per-round trace and final evaluation in the report belong to
    repeat 0; ``repeats`` summarises all of them.
    """
    t0 = time.perf_counter()
    main = run_single(cfg, progress)
    metrics = main.pop("_metrics")
    report = main
    if cfg.repeats > 1:
        summary = [{"seed": cfg.seed, "final_accuracy": report["final"]["accuracy"], "final_mcc": report["final"]["mcc"]}]
        for i in range(1, cfg.repeats):
            s = derive_seed(cfg.seed, TAG_REPEAT, i)
            rep = run_single(cfg.with_seed(s))
            summary.append({"seed": s, "final_accuracy": rep["final"]["accuracy"], "final_mcc": rep["final"]["mcc"]})
        report["repeats"] = {
            "runs": summary,
            "mean_final_accuracy": float(np.mean([x["final_accuracy"] for x in summary])),
            "mean_final_mcc": float(np.mean([x["final_mcc"] for x in summary])),
        }
    elapsed = time.perf_counter() - t0
    if write:
        out = Path(out_dir if out_dir is not None else cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(metrics_csv(metrics), encoding="utf-8")
        (out / "report.json").write_text(report_json(report), encoding="utf-8")
        (out / "timing.json").write_text(json.dumps({"wall_clock_seconds": elapsed}) + "\n", encoding="utf-8")
    report = dict(report)
    report["wall_clock_seconds"] = elapsed
    return report


def metrics_csv(rounds) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for m in rounds:
        w.writerow(m.csv_row())
    return buf.getvalue()


def report_json(report: dict) -> str:
    clean = {k: v for k, v in report.items() if k != "wall_clock_seconds"}
    return json.dumps(clean, indent=2, allow_nan=True) + "\n"
