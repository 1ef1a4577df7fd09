"""Experiment configuration: JSON file form, validation and seed derivation."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .data import PopulationConfig
from .errors import ConfigError
from .gate import GateConfig
from .model import TrainConfig
from .network import NetworkModel

SCENARIOS = ("stale-fleet", "knowledge-transfer", "drift")

# seed-derivation tags
TAG_POPULATION = 1
TAG_PARTITION = 2
TAG_CLUSTER = 3
TAG_NETWORK = 4
TAG_TRAIN = 5
TAG_REPEAT = 6
TAG_SCENARIO = 7


def derive_seed(master: int, *tags: int) -> int:
    """Stable 63-bit seed for a named sub-stream of the master seed."""
    ss = np.random.SeedSequence([int(master), *map(int, tags)])
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class DriverFailure:
    round: int
    region: int


@dataclass(frozen=True)
class ExperimentConfig:
    population: PopulationConfig = field(default_factory=PopulationConfig)
    partition_mode: str = "equal"
    dirichlet_alpha: float = 0.5
    groups: int = 10
    gate: GateConfig = field(default_factory=GateConfig)
    network: NetworkModel = field(default_factory=NetworkModel)
    rounds: int = 50
    train: TrainConfig = field(default_factory=TrainConfig)
    event_feed: str | None = None
    scenario: str | None = None
    seed: int = 0
    output_dir: str = "runs/default"
    workers: int = 1
    repeats: int = 1
    driver_failures: tuple[DriverFailure, ...] = ()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, seed=seed)

    def to_json(self) -> dict:
        return config_to_json(self)


# file form ----------------------------------------------------------------

_POP_KEYS = ("num_classes", "num_clients", "num_features", "samples_per_class", "class_separation", "noise_sigma")
_TRAIN_KEYS = ("learning_rate", "epochs", "batch_size", "l2_penalty")
_GATE_KEYS = ("enabled", "tau_pre", "tau_post", "min_improvement")
_NET_KEYS = ("latency_min_ms", "latency_max_ms", "drop_prob")
_TOP_KEYS = (
    "seed", "rounds", "groups", "scenario", "event_feed", "output_dir", "workers", "repeats",
    "population", "partition", "train", "gate", "network", "driver_failures",
)


def config_to_json(cfg: ExperimentConfig) -> dict:
    partition: dict[str, Any] = {"mode": cfg.partition_mode}
    if cfg.partition_mode == "dirichlet":
        partition["alpha"] = cfg.dirichlet_alpha
    return {
        "seed": cfg.seed,
        "rounds": cfg.rounds,
        "groups": cfg.groups,
        "scenario": cfg.scenario,
        "event_feed": cfg.event_feed,
        "output_dir": cfg.output_dir,
        "workers": cfg.workers,
        "repeats": cfg.repeats,
        "population": {k: getattr(cfg.population, k) for k in _POP_KEYS},
        "partition": partition,
        "train": {k: getattr(cfg.train, k) for k in _TRAIN_KEYS},
        "gate": {k: getattr(cfg.gate, k) for k in _GATE_KEYS},
        "network": {k: getattr(cfg.network, k) for k in _NET_KEYS},
        "driver_failures": [{"round": f.round, "region": f.region} for f in cfg.driver_failures],
    }


class _Checker:
    def __init__(self):
        self.problems: list[tuple[str, str]] = []

    def fail(self, path: str, msg: str) -> None:
        self.problems.append((path, msg))

    def section(self, raw: dict, key: str, allowed) -> dict:
        val = raw.get(key, {})
        if not isinstance(val, dict):
            self.fail(key, "must be an object")
            return {}
        for extra in sorted(set(val) - set(allowed)):
            self.fail(f"{key}.{extra}", "unknown key")
        return val

    def integer(self, d: dict, key: str, path: str, default, lo=None):
        v = d.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(path, f"must be an integer, got {v!r}")
            return default
        if lo is not None and v < lo:
            self.fail(path, f"must be >= {lo}, got {v}")
            return default
        return v

    def real(self, d: dict, key: str, path: str, default, lo=None, hi=None, strict_lo=False):
        v = d.get(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
            self.fail(path, f"must be a finite number, got {v!r}")
            return default
        v = float(v)
        if lo is not None and (v <= lo if strict_lo else v < lo):
            self.fail(path, f"must be {'>' if strict_lo else '>='} {lo}, got {v}")
            return default
        if hi is not None and v > hi:
            self.fail(path, f"must be <= {hi}, got {v}")
            return default
        return v

    def boolean(self, d: dict, key: str, path: str, default):
        v = d.get(key, default)
        if not isinstance(v, bool):
            self.fail(path, f"must be true or false, got {v!r}")
            return default
        return v

    def optional_str(self, d: dict, key: str, path: str, default):
        v = d.get(key, default)
        if v is not None and not isinstance(v, str):
            self.fail(path, f"must be a string or null, got {v!r}")
            return default
        return v


def config_from_json(raw: Any) -> ExperimentConfig:
    """Build and validate a config; every problem is reported at once."""
    ck = _Checker()
    if not isinstance(raw, dict):
        raise ConfigError([("", "config must be a JSON object")])
    for extra in sorted(set(raw) - set(_TOP_KEYS)):
        ck.fail(extra, "unknown key")
    dflt = ExperimentConfig()

    pop = ck.section(raw, "population", _POP_KEYS)
    dp = dflt.population
    num_classes = ck.integer(pop, "num_classes", "population.num_classes", dp.num_classes, lo=2)
    num_clients = ck.integer(pop, "num_clients", "population.num_clients", dp.num_clients, lo=1)
    num_features = ck.integer(pop, "num_features", "population.num_features", dp.num_features, lo=1)
    spc = ck.integer(pop, "samples_per_class", "population.samples_per_class", dp.samples_per_class, lo=1)
    sep = ck.real(pop, "class_separation", "population.class_separation", dp.class_separation, lo=0, strict_lo=True)
    sigma = ck.real(pop, "noise_sigma", "population.noise_sigma", dp.noise_sigma, lo=0, strict_lo=True)

    part = ck.section(raw, "partition", ("mode", "alpha"))
    mode = part.get("mode", "equal")
    if mode not in ("equal", "dirichlet"):
        ck.fail("partition.mode", f"must be 'equal' or 'dirichlet', got {mode!r}")
        mode = "equal"
    alpha = ck.real(part, "alpha", "partition.alpha", dflt.dirichlet_alpha, lo=0, strict_lo=True)

    tr = ck.section(raw, "train", _TRAIN_KEYS)
    dt = dflt.train
    lr = ck.real(tr, "learning_rate", "train.learning_rate", dt.learning_rate, lo=0)
    epochs = ck.integer(tr, "epochs", "train.epochs", dt.epochs, lo=0)
    bs = ck.integer(tr, "batch_size", "train.batch_size", dt.batch_size, lo=1)
    l2 = ck.real(tr, "l2_penalty", "train.l2_penalty", dt.l2_penalty, lo=0)

    gt = ck.section(raw, "gate", _GATE_KEYS)
    dg = dflt.gate
    enabled = ck.boolean(gt, "enabled", "gate.enabled", dg.enabled)
    tau_pre = ck.real(gt, "tau_pre", "gate.tau_pre", dg.tau_pre, lo=0)
    tau_post = ck.real(gt, "tau_post", "gate.tau_post", dg.tau_post, lo=0)
    min_imp = ck.real(gt, "min_improvement", "gate.min_improvement", dg.min_improvement, lo=0)

    nt = ck.section(raw, "network", _NET_KEYS)
    dn = dflt.network
    lat_lo = ck.real(nt, "latency_min_ms", "network.latency_min_ms", dn.latency_min_ms, lo=0)
    lat_hi = ck.real(nt, "latency_max_ms", "network.latency_max_ms", dn.latency_max_ms, lo=0)
    if lat_lo > lat_hi:
        ck.fail("network.latency_min_ms", "must not exceed latency_max_ms")
        lat_lo, lat_hi = dn.latency_min_ms, dn.latency_max_ms
    drop = ck.real(nt, "drop_prob", "network.drop_prob", dn.drop_prob, lo=0, hi=1)

    seed = ck.integer(raw, "seed", "seed", dflt.seed, lo=0)
    if seed >= 2**64:
        ck.fail("seed", "must fit in an unsigned 64-bit integer")
        seed = 0
    rounds = ck.integer(raw, "rounds", "rounds", dflt.rounds, lo=0)
    groups = ck.integer(raw, "groups", "groups", dflt.groups, lo=1)
    if groups > num_clients:
        ck.fail("groups", f"cannot exceed population.num_clients ({num_clients})")
        groups = 1
    workers = ck.integer(raw, "workers", "workers", dflt.workers, lo=1)
    repeats = ck.integer(raw, "repeats", "repeats", dflt.repeats, lo=1)
    scenario = ck.optional_str(raw, "scenario", "scenario", None)
    if scenario is not None and scenario not in SCENARIOS:
        ck.fail("scenario", f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
        scenario = None
    feed = ck.optional_str(raw, "event_feed", "event_feed", None)
    out = ck.optional_str(raw, "output_dir", "output_dir", dflt.output_dir) or dflt.output_dir

    failures = []
    raw_fail = raw.get("driver_failures", [])
    if not isinstance(raw_fail, list):
        ck.fail("driver_failures", "must be an array")
        raw_fail = []
    for i, f in enumerate(raw_fail):
        path = f"driver_failures[{i}]"
        if not isinstance(f, dict) or set(f) != {"round", "region"}:
            ck.fail(path, "must be an object with exactly 'round' and 'region'")
            continue
        r = ck.integer(f, "round", f"{path}.round", 1, lo=1)
        g = ck.integer(f, "region", f"{path}.region", 0, lo=0)
        failures.append(DriverFailure(r, g))

    if ck.problems:
        raise ConfigError(ck.problems)
    try:
        return ExperimentConfig(
            population=PopulationConfig(num_classes, num_clients, num_features, spc, sep, sigma),
            partition_mode=mode,
            dirichlet_alpha=alpha,
            groups=groups,
            gate=GateConfig(tau_pre, tau_post, min_imp, enabled),
            network=NetworkModel(lat_lo, lat_hi, drop),
            rounds=rounds,
            train=TrainConfig(lr, epochs, bs, l2),
            event_feed=feed,
            scenario=scenario,
            seed=seed,
            output_dir=out,
            workers=workers,
            repeats=repeats,
            driver_failures=tuple(failures),
        )
    except ValueError as exc:
        raise ConfigError([("", str(exc))]) from exc


def load_config(path) -> ExperimentConfig:
    """Read and validate a config file; a relative ``event_feed`` is taken relative to it."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"{path}: invalid JSON: {exc}")]) from exc
    cfg = config_from_json(raw)
    if cfg.event_feed and not Path(cfg.event_feed).is_absolute():
        cfg = dataclasses.replace(cfg, event_feed=str(path.parent / cfg.event_feed))
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_json(cfg), indent=2) + "\n"
