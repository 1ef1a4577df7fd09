"""Softmax-regression learner used as each robot's local model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable

import numpy as np

from . import kernels
from .errors import EmptyShard, InvalidShape, NonFiniteLoss, ShapeMismatch, ShrinkNotAllowed


_TINY = np.finfo(np.float64).tiny


def _frozen(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Weights (k x d) and bias (k) of a k-class linear softmax classifier.

    Arrays are copied on construction and made read-only. Equality is bitwise.
    """

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        W = _frozen(self.weights)
        b = _frozen(self.bias)
        if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
            raise InvalidShape(f"weights {W.shape} and bias {b.shape} are inconsistent")
        k, d = W.shape
        if d < 1 or k < 2:
            raise InvalidShape(f"need d >= 1 and k >= 2, got d={d}, k={k}")
        if not (np.isfinite(W).all() and np.isfinite(b).all()):
            raise ValueError("model parameters must be finite")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "bias", b)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def num_features(self) -> int:
        return self.weights.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    @property
    def size(self) -> int:
        k, d = self.weights.shape
        return k * d + k

    def flatten(self) -> np.ndarray:
        """Row-major weights followed by bias."""
        return np.concatenate([self.weights.ravel(), self.bias])

    @classmethod
    def from_flat(cls, vec, num_features: int, num_classes: int) -> "ModelParams":
        vec = np.asarray(vec, dtype=np.float64)
        kd = num_classes * num_features
        if vec.shape != (kd + num_classes,):
            raise ShapeMismatch(
                f"flat vector of length {vec.shape} does not fit d={num_features}, k={num_classes}"
            )
        return cls(vec[:kd].reshape(num_classes, num_features), vec[kd:])

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.weights.tobytes() == other.weights.tobytes()
            and self.bias.tobytes() == other.bias.tobytes()
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class DataShard:
    """One client's labelled feature rows. Never leaves the client."""

    features: np.ndarray
    labels: np.ndarray
    client_id: Hashable = None
    num_classes: int | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, 0)
        X = _frozen(X)
        y = _frozen(self.labels, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise InvalidShape(f"features {X.shape} and labels {y.shape} are inconsistent")
        if not np.isfinite(X).all():
            raise ValueError("feature values must be finite")
        if y.size and y.min() < 0:
            raise ValueError("labels must be nonnegative")
        if self.num_classes is not None and y.size and y.max() >= self.num_classes:
            raise ValueError(f"label {int(y.max())} >= declared class count {self.num_classes}")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "DataShard":
        idx = np.asarray(idx, dtype=np.int64)
        return DataShard(self.features[idx], self.labels[idx], self.client_id, self.num_classes)

    def with_client(self, client_id) -> "DataShard":
        return DataShard(self.features, self.labels, client_id, self.num_classes)

    @classmethod
    def concat(cls, shards, client_id=None, num_classes=None) -> "DataShard":
        shards = list(shards)
        if not shards:
            raise ValueError("nothing to concatenate")
        X = np.concatenate([s.features for s in shards], axis=0)
        y = np.concatenate([s.labels for s in shards])
        return cls(X, y, client_id, num_classes)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 5
    batch_size: int = 8
    l2_penalty: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.l2_penalty >= 0:
            raise ValueError("l2_penalty must be >= 0")


@dataclass(frozen=True)
class TrainStats:
    loss_before: float
    loss_after: float
    grad_steps: int
    compute_units: int = field(init=False)
    batch_size: int = 1

    def __post_init__(self):
        object.__setattr__(self, "compute_units", self.grad_steps * self.batch_size)


def init_params(d: int, k: int, mode: str = "zeros", scale: float = 0.01, seed: int = 0) -> ModelParams:
    """Fresh parameters. ``mode`` is ``"zeros"`` or ``"gaussian"``."""
    if d < 1 or k < 2:
        raise InvalidShape(f"need d >= 1 and k >= 2, got d={d}, k={k}")
    if mode == "zeros":
        return ModelParams(np.zeros((k, d)), np.zeros(k))
    if mode == "gaussian":
        if not scale > 0:
            raise ValueError("gaussian init needs scale > 0")
        rng = np.random.default_rng(seed)
        return ModelParams(rng.normal(0.0, scale, (k, d)), rng.normal(0.0, scale, k))
    raise ValueError(f"unknown init mode {mode!r}")


def _check_x(params: ModelParams, X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.shape[-1] != params.num_features:
        raise ShapeMismatch(f"input has {X.shape[-1]} features, model expects {params.num_features}")
    return X


def predict(params: ModelParams, x) -> np.ndarray:
    """Class probabilities for one feature vector (length d)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatch("predict takes a single feature vector; use predict_batch")
    return predict_batch(params, x[None, :])[0]


def predict_batch(params: ModelParams, X) -> np.ndarray:
    X = _check_x(params, X)
    if X.ndim != 2:
        raise ShapeMismatch("predict_batch takes an n x d matrix")
    out = np.empty((X.shape[0], params.num_classes))
    if X.shape[0]:
        kernels.predict_proba(params.weights, params.bias, X, out)
        # exp() underflows past a ~745 logit gap; keep every class strictly possible
        np.maximum(out, _TINY, out=out)
    return out


def _check_shard(params: ModelParams, shard: DataShard) -> None:
    if len(shard) == 0:
        raise EmptyShard(f"shard for client {shard.client_id!r} is empty")
    if shard.num_features != params.num_features:
        raise ShapeMismatch(
            f"shard has {shard.num_features} features, model expects {params.num_features}"
        )
    if shard.labels.max() >= params.num_classes:
        raise ShapeMismatch(
            f"label {int(shard.labels.max())} outside model's {params.num_classes} classes"
        )


def loss(params: ModelParams, shard: DataShard, l2_penalty: float = 0.0) -> float:
    """Mean cross-entropy plus ``l2_penalty * ||W||^2 / 2``."""
    _check_shard(params, shard)
    return float(kernels.loss_only(params.weights, params.bias, shard.features, shard.labels, float(l2_penalty)))


def gradient(params: ModelParams, shard: DataShard, l2_penalty: float = 0.0) -> np.ndarray:
    """Analytic gradient of :func:`loss`, flattened like :meth:`ModelParams.flatten`."""
    _check_shard(params, shard)
    gW = np.empty(params.shape)
    gb = np.empty(params.num_classes)
    kernels.loss_grad(params.weights, params.bias, shard.features, shard.labels, float(l2_penalty), gW, gb)
    return np.concatenate([gW.ravel(), gb])


def epoch_order(n: int, epochs: int, seed: int) -> np.ndarray:
    """Concatenated per-epoch shuffles driving mini-batch selection."""
    rng = np.random.default_rng(seed)
    if epochs == 0:
        return np.empty(0, dtype=np.int64)
    return np.concatenate([rng.permutation(n) for _ in range(epochs)]).astype(np.int64)


def train_local(params: ModelParams, shard: DataShard, cfg: TrainConfig) -> tuple[ModelParams, TrainStats]:
    """Seeded mini-batch gradient descent on one client's shard."""
    _check_shard(params, shard)
    l2 = float(cfg.l2_penalty)
    before = loss(params, shard, l2)
    if not math.isfinite(before):
        raise NonFiniteLoss(f"initial loss is {before}")
    if cfg.epochs == 0 or cfg.learning_rate == 0:
        steps = cfg.epochs * -(-len(shard) // cfg.batch_size)
        return params, TrainStats(before, before, steps, cfg.batch_size)

    W = np.array(params.weights)
    b = np.array(params.bias)
    order = epoch_order(len(shard), cfg.epochs, cfg.rng_seed)
    steps = int(kernels.sgd(W, b, shard.features, shard.labels, order,
                            int(cfg.batch_size), float(cfg.learning_rate), l2))
    if not (np.isfinite(W).all() and np.isfinite(b).all()):
        raise NonFiniteLoss(f"training diverged for client {shard.client_id!r}")
    trained = ModelParams(W, b)
    after = loss(trained, shard, l2)
    if not math.isfinite(after):
        raise NonFiniteLoss(f"loss diverged to {after} for client {shard.client_id!r}")
    return trained, TrainStats(before, after, steps, cfg.batch_size)


def expand_classes(params: ModelParams, new_k: int) -> ModelParams:
    """Append zero-initialised output rows for newly discovered classes."""
    k = params.num_classes
    if new_k < k:
        raise ShrinkNotAllowed(f"cannot shrink from {k} to {new_k} classes")
    if new_k == k:
        return params
    extra = new_k - k
    W = np.vstack([params.weights, np.zeros((extra, params.num_features))])
    b = np.concatenate([params.bias, np.zeros(extra)])
    return ModelParams(W, b)
