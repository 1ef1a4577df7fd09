"""Deterministic simulator for hierarchical federated learning on robot fleets."""

from .kernels import BACKEND as KERNEL_BACKEND
from .model import (
    DataShard,
    ModelParams,
    TrainConfig,
    TrainStats,
    expand_classes,
    gradient,
    init_params,
    loss,
    predict,
    train_local,
)
from .protocol import decode_update, encode_update, fed_avg, global_aggregate, regional_aggregate

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "DataShard",
    "ModelParams",
    "TrainConfig",
    "TrainStats",
    "decode_update",
    "encode_update",
    "expand_classes",
    "fed_avg",
    "global_aggregate",
    "gradient",
    "init_params",
    "loss",
    "predict",
    "regional_aggregate",
    "train_local",
]
