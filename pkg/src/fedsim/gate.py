"""Self-regulation checkpoints before and after local training, plus A/B cost accounting."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import MismatchedRuns, ShapeMismatch
from .model import DataShard, ModelParams, TrainStats, loss

NORM_EPS = 1e-12


class Decision(str, enum.Enum):
    PARTICIPATE = "participate"
    SKIP_PRE = "skip_pre"
    SKIP_POST = "skip_post"


class Reason(str, enum.Enum):
    ALREADY_FIT = "already_fit"
    NO_DATA = "no_data"
    NEGLIGIBLE_UPDATE = "negligible_update"
    NO_IMPROVEMENT = "no_improvement"
    UNREACHED = "unreached"


@dataclass(frozen=True)
class GateConfig:
    """Checkpoint thresholds.

    tau_pre: skip training when the received model's local loss is below this.
    tau_post: suppress upload when ||trained - global|| / ||global|| is below this.
    min_improvement: suppress upload when loss_before - loss_after is below this.
    """

    tau_pre: float = 0.1
    tau_post: float = 0.01
    min_improvement: float = 0.0
    enabled: bool = False

    def __post_init__(self):
        for name in ("tau_pre", "tau_post", "min_improvement"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class GateDecision:
    kind: Decision
    reason: Reason | None = None
    compute_units: int = 0
    value: float | None = None  # the loss or ratio the decision was based on

    @property
    def participate(self) -> bool:
        return self.kind is Decision.PARTICIPATE


def pre_training_check(global_params: ModelParams, shard: DataShard, cfg: GateConfig) -> GateDecision:
    """Before-training checkpoint. Charges one full-shard loss pass (n units)."""
    n = len(shard)
    if n == 0:
        return GateDecision(Decision.SKIP_PRE, Reason.NO_DATA, 0)
    value = loss(global_params, shard)
    if value < cfg.tau_pre:
        return GateDecision(Decision.SKIP_PRE, Reason.ALREADY_FIT, n, value)
    return GateDecision(Decision.PARTICIPATE, None, n, value)


def update_ratio(global_params: ModelParams, trained: ModelParams) -> float:
    if global_params.shape != trained.shape:
        raise ShapeMismatch(f"trained shape {trained.shape} != global shape {global_params.shape}")
    g = global_params.flatten()
    delta = np.linalg.norm(trained.flatten() - g)
    return float(delta / max(np.linalg.norm(g), NORM_EPS))


def post_training_check(
    global_params: ModelParams, trained: ModelParams, stats: TrainStats, cfg: GateConfig
) -> GateDecision:
    """After-training checkpoint; free in compute terms."""
    r = update_ratio(global_params, trained)
    if r < cfg.tau_post:
        return GateDecision(Decision.SKIP_POST, Reason.NEGLIGIBLE_UPDATE, 0, r)
    if (stats.loss_before - stats.loss_after) < cfg.min_improvement:
        return GateDecision(Decision.SKIP_POST, Reason.NO_IMPROVEMENT, 0, r)
    return GateDecision(Decision.PARTICIPATE, None, 0, r)


@dataclass(frozen=True)
class SavingsReport:
    baseline_bytes: int
    gated_bytes: int
    baseline_compute: int
    gated_compute: int
    comm_savings_pct: float
    compute_savings_pct: float
    accuracy_delta: float
    baseline_upstream_bytes: int = 0
    gated_upstream_bytes: int = 0

    def to_json(self) -> dict:
        return dict(self.__dict__)


def savings_pct(baseline: int, gated: int) -> float:
    """Percentage reduction; negative when gating costs more. Never clamped."""
    if baseline <= 0:
        return 0.0
    return 100.0 * (baseline - gated) / baseline


def _totals(report: Mapping) -> tuple[int, int, int, int, float]:
    rounds = report["rounds"]
    up = sum(int(r["bytes_up"]) for r in rounds)
    down = sum(int(r["bytes_down"]) for r in rounds)
    compute = sum(int(r["compute_units"]) for r in rounds)
    return up, down, compute, len(rounds), float(report["final"]["accuracy"])


def account_costs(baseline: Mapping, gated: Mapping) -> SavingsReport:
    """Compare two seed-matched experiment reports (as written by the engine)."""
    b_up, b_down, b_cmp, b_rounds, b_acc = _totals(baseline)
    g_up, g_down, g_cmp, g_rounds, g_acc = _totals(gated)
    b_clients = baseline["config"]["population"]["num_clients"]
    g_clients = gated["config"]["population"]["num_clients"]
    if b_rounds != g_rounds or b_clients != g_clients:
        raise MismatchedRuns(
            f"baseline has {b_rounds} rounds/{b_clients} clients, gated has {g_rounds}/{g_clients}"
        )
    return SavingsReport(
        baseline_bytes=b_up + b_down,
        gated_bytes=g_up + g_down,
        baseline_compute=b_cmp,
        gated_compute=g_cmp,
        comm_savings_pct=savings_pct(b_up + b_down, g_up + g_down),
        compute_savings_pct=savings_pct(b_cmp, g_cmp),
        accuracy_delta=b_acc - g_acc,
        baseline_upstream_bytes=b_up,
        gated_upstream_bytes=g_up,
    )
