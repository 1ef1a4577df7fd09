import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsim.cluster import (
    RobotSite,
    elect_driver,
    form_groups,
    generate_sites,
    kmeans,
    reassign_on_failure,
)
from fedsim.errors import InvalidK, NotADriver, TooManyGroups


def sites_from(points, hints=None):
    hints = hints or [None] * len(points)
    return [RobotSite(i, tuple(p), h) for i, (p, h) in enumerate(zip(points, hints))]


def test_single_group_contains_everyone():
    sites = generate_sites(20, 3, seed=1)
    a = form_groups(sites, 1)
    a.check()
    assert a.num_groups == 1 and a.members(0) == list(range(20))


def test_one_group_per_robot():
    sites = generate_sites(7, 7, seed=2)
    a = form_groups(sites, 7)
    a.check()
    assert all(len(m) == 1 and a.drivers[g] == m[0] for g, m in a.groups().items())


def test_two_separated_clouds_split_cleanly():
    rng = np.random.default_rng(0)
    left = rng.normal([0, 0], 1.0, (15, 2))
    right = rng.normal([500, 0], 1.0, (15, 2))
    a = form_groups(sites_from(np.vstack([left, right])), 2, seed=3)
    a.check()
    groups = sorted(a.groups().values())
    assert groups == [list(range(15)), list(range(15, 30))]


def test_equidistant_driver_tie_goes_to_lowest_id():
    # two members symmetric about the centroid
    sites = sites_from([(1.0, 0.0), (-1.0, 0.0)])
    a = form_groups(sites, 1)
    assert a.drivers[0] == 0
    assert elect_driver(a, 0, sites) == 0


def test_three_member_driver_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(20):
        pts = rng.uniform(0, 10, (3, 2))
        a = form_groups(sites_from(pts), 1)
        c = pts.mean(axis=0)
        expect = min(range(3), key=lambda i: (((pts[i] - c) ** 2).sum(), i))
        assert a.drivers[0] == expect


def test_failover_elects_new_driver_from_survivors():
    sites = generate_sites(30, 3, seed=4)
    a = form_groups(sites, 3, seed=4)
    g, d = next(iter(sorted(a.drivers.items())))
    survivors = [c for c in a.members(g) if c != d]
    b = reassign_on_failure(a, d, sites)
    b.check()
    assert d not in b.membership
    assert b.members(g) == survivors
    pts = np.array([sites[c].position for c in survivors])
    cen = pts.mean(axis=0)
    expect = min(survivors, key=lambda c: (((np.array(sites[c].position) - cen) ** 2).sum(), c))
    assert b.drivers[g] == expect
    # other groups untouched
    for other in a.drivers:
        if other != g:
            assert b.drivers[other] == a.drivers[other]
            assert b.members(other) == a.members(other)


def test_failover_dissolves_singleton_group():
    sites = generate_sites(4, 4, seed=6)
    a = form_groups(sites, 4, seed=6)
    d = a.drivers[0]
    b = reassign_on_failure(a, d, sites)
    b.check()
    assert b.num_groups == 3 and 0 not in b.drivers


def test_failover_rejects_non_driver():
    sites = generate_sites(10, 2, seed=7)
    a = form_groups(sites, 2, seed=7)
    non = next(c for c in range(10) if c not in a.drivers.values())
    with pytest.raises(NotADriver):
        reassign_on_failure(a, non, sites)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 60), st.integers(1, 5))
def test_inertia_never_increases(seed, n, k):
    P = np.random.default_rng(seed).uniform(0, 100, (n, 2))
    labels, C, hist = kmeans(P, k, seed)
    assert all(b <= a + 1e-9 * max(1.0, a) for a, b in zip(hist, hist[1:]))
    assert len(np.unique(labels)) == k


def test_kmeans_coincident_points_stay_nonempty():
    P = np.zeros((5, 2))
    labels, _, _ = kmeans(P, 3, 0)
    assert len(np.unique(labels)) == 3


def test_region_hints_define_groups():
    pts = [(0, 0), (900, 900), (1, 1), (901, 899)]
    a = form_groups(sites_from(pts, ["a", "b", "b", "a"]), k=99)
    a.check()
    assert sorted(a.groups().values()) == [[0, 3], [1, 2]]


def test_deterministic_given_seed():
    sites = generate_sites(50, 5, seed=8)
    assert form_groups(sites, 5, seed=1) == form_groups(sites, 5, seed=1)
    assert generate_sites(50, 5, seed=8) == sites


def test_grouping_errors():
    sites = generate_sites(3, 1)
    with pytest.raises(TooManyGroups):
        form_groups(sites, 4)
    with pytest.raises(InvalidK):
        form_groups(sites, 0)
    with pytest.raises(ValueError):
        form_groups(sites + [RobotSite(0, (1.0, 1.0))], 1)


def test_repeated_failover_preserves_invariants():
    sites = generate_sites(40, 4, seed=9)
    a = form_groups(sites, 4, seed=9)
    for _ in range(12):
        g = min(a.drivers)
        a = reassign_on_failure(a, a.drivers[g], sites)
        a.check()
    assert len(a.membership) == 40 - 12
