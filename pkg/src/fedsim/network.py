"""Lossy, latent links between clients, drivers and the global server."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Link(enum.IntEnum):
    DOWN = 1  # global server -> client broadcast
    UP = 2  # client -> regional driver
    RELAY = 3  # regional driver -> global server


@dataclass(frozen=True)
class NetworkModel:
    latency_min_ms: float = 5.0
    latency_max_ms: float = 50.0
    drop_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.latency_min_ms <= self.latency_max_ms:
            raise ValueError("need 0 <= latency_min_ms <= latency_max_ms")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must lie in [0, 1]")


@dataclass(frozen=True)
class Delivery:
    delivered: bool
    latency_ms: float | None = None


def simulate_network(byte_len: int, net: NetworkModel, link_id: tuple[int, int], round: int) -> Delivery:
    """Decide the fate of one message on ``link_id`` in ``round``.

    The random stream depends only on (seed, link, round), so results do not
    depend on the order in which messages are simulated. The drop draw comes
    first and is compared against ``drop_prob``: lowering ``drop_prob``
    never turns a delivery into a drop.
    """
    if byte_len < 0:
        raise ValueError("byte_len must be >= 0")
    rng = np.random.default_rng([net.seed, int(link_id[0]), int(link_id[1]), round])
    u_drop, u_lat = rng.random(2)
    if u_drop < net.drop_prob:
        return Delivery(False)
    lat = net.latency_min_ms + (net.latency_max_ms - net.latency_min_ms) * u_lat
    return Delivery(True, float(lat))
