import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsim.network import Link, NetworkModel, simulate_network


def test_lossless_always_delivers():
    net = NetworkModel(drop_prob=0.0, seed=1)
    for cid in range(200):
        d = simulate_network(905, net, (Link.UP, cid), 1)
        assert d.delivered and 5.0 <= d.latency_ms <= 50.0


def test_fully_lossy_never_delivers():
    net = NetworkModel(drop_prob=1.0, seed=1)
    assert not any(simulate_network(905, net, (Link.UP, c), r).delivered for c in range(50) for r in range(5))


def test_empirical_drop_rate():
    net = NetworkModel(drop_prob=0.3, seed=2)
    drops = sum(not simulate_network(100, net, (Link.DOWN, i), 7).delivered for i in range(1000))
    assert abs(drops / 1000 - 0.3) <= 0.05


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.floats(0, 1), st.floats(0, 1), st.integers(0, 1000), st.integers(0, 100))
def test_lower_drop_prob_never_loses_more(seed, a, b, cid, r):
    lo, hi = sorted((a, b))
    d_lo = simulate_network(1, NetworkModel(drop_prob=lo, seed=seed), (Link.UP, cid), r)
    d_hi = simulate_network(1, NetworkModel(drop_prob=hi, seed=seed), (Link.UP, cid), r)
    if d_hi.delivered:
        assert d_lo.delivered


def test_order_independent():
    net = NetworkModel(drop_prob=0.5, seed=3)
    fwd = [simulate_network(1, net, (Link.UP, c), 2) for c in range(30)]
    rev = [simulate_network(1, net, (Link.UP, c), 2) for c in reversed(range(30))][::-1]
    assert fwd == rev


def test_invalid_settings():
    with pytest.raises(ValueError):
        NetworkModel(drop_prob=1.5)
    with pytest.raises(ValueError):
        NetworkModel(latency_min_ms=10, latency_max_ms=5)
    with pytest.raises(ValueError):
        simulate_network(-1, NetworkModel(), (Link.UP, 0), 0)
