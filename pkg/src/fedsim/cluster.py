"""Spatial group formation, driver election and driver failover."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Hashable, Mapping, Sequence

import numpy as np

from .errors import EmptyGroup, InvalidK, NotADriver, TooManyGroups

MAX_ITER = 100
TOL = 1e-9


@dataclass(frozen=True)
class RobotSite:
    client_id: int
    position: tuple[float, float]
    region_hint: Hashable | None = None

    def __post_init__(self):
        x, y = self.position
        if not (np.isfinite(x) and np.isfinite(y)):
            raise ValueError(f"site {self.client_id}: non-finite position")
        object.__setattr__(self, "position", (float(x), float(y)))


@dataclass(frozen=True)
class ClusterAssignment:
    """Group membership keyed by stable group ids (ids survive dissolution)."""

    membership: Mapping[int, int]
    drivers: Mapping[int, int]
    centroids: Mapping[int, tuple[float, float]]
    inertia_history: tuple[float, ...] = field(default=(), compare=False)

    @property
    def num_groups(self) -> int:
        return len(self.drivers)

    def groups(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {g: [] for g in sorted(self.drivers)}
        for cid in sorted(self.membership):
            out.setdefault(self.membership[cid], []).append(cid)
        return out

    def members(self, group: int) -> list[int]:
        return sorted(c for c, g in self.membership.items() if g == group)

    def check(self) -> None:
        """Raise AssertionError if any structural invariant is broken."""
        groups = self.groups()
        assert set(groups) == set(self.drivers), "group ids disagree with driver table"
        for g, members in groups.items():
            assert members, f"group {g} is empty"
            assert self.drivers[g] in members, f"driver of group {g} is not a member"
        assert set(self.centroids) == set(self.drivers), "centroid table out of sync"


def _positions(sites: Sequence[RobotSite]) -> np.ndarray:
    return np.array([s.position for s in sites], dtype=np.float64).reshape(len(sites), 2)


def _sq_dists(P: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((P[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _kmeans_pp(P: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = P.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((P - P[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with centers; pick unused indices
            rest = [i for i in range(n) if i not in set(chosen)]
            chosen.append(int(rng.choice(rest)))
        else:
            chosen.append(int(rng.choice(n, p=d2 / total)))
        d2 = np.minimum(d2, ((P - P[chosen[-1]]) ** 2).sum(axis=1))
    return P[chosen].copy()


def _repair_empty(P: np.ndarray, labels: np.ndarray, C: np.ndarray) -> None:
    k = C.shape[0]
    while True:
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return
        big = int(np.argmax(counts))
        members = np.flatnonzero(labels == big)
        far = members[int(np.argmax(((P[members] - C[big]) ** 2).sum(axis=1)))]
        labels[far] = empty[0]
        C[empty[0]] = P[far]


def kmeans(P: np.ndarray, k: int, seed: int = 0, max_iter: int = MAX_ITER, tol: float = TOL):
    """Lloyd's algorithm with k-means++ seeding.

    Returns ``(labels, centroids, inertia_history)``; the history holds the
    objective after each assignment step and is non-increasing.
    """
    n = P.shape[0]
    if k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")
    if k > n:
        raise TooManyGroups(f"k={k} exceeds {n} sites")
    rng = np.random.default_rng([seed, 0xC1A5])
    C = _kmeans_pp(P, k, rng)
    history: list[float] = []
    labels = np.argmin(_sq_dists(P, C), axis=1)
    for _ in range(max_iter):
        _repair_empty(P, labels, C)
        history.append(float(((P - C[labels]) ** 2).sum()))
        newC = np.array([P[labels == j].mean(axis=0) for j in range(k)])
        shift = float(np.abs(newC - C).max())
        C = newC
        labels = np.argmin(_sq_dists(P, C), axis=1)
        if shift < tol:
            break
    _repair_empty(P, labels, C)
    history.append(float(((P - C[labels]) ** 2).sum()))
    # re-centre so reported centroids are the member means
    C = np.array([P[labels == j].mean(axis=0) for j in range(k)])
    return labels, C, tuple(history)


def _elect(members: Sequence[int], centroid, pos: Mapping[int, tuple[float, float]]) -> int:
    cx, cy = centroid
    return min(members, key=lambda c: ((pos[c][0] - cx) ** 2 + (pos[c][1] - cy) ** 2, c))


def form_groups(sites: Sequence[RobotSite], k: int, seed: int = 0) -> ClusterAssignment:
    """Group robots by field position and elect a driver per group.

    When every site carries a ``region_hint`` the hints define the groups
    directly and ``k`` is ignored.
    """
    sites = sorted(sites, key=lambda s: s.client_id)
    ids = [s.client_id for s in sites]
    if len(set(ids)) != len(ids):
        raise ValueError("client ids must be unique")
    pos = {s.client_id: s.position for s in sites}
    if sites and all(s.region_hint is not None for s in sites):
        hints = sorted({s.region_hint for s in sites})
        gid = {h: i for i, h in enumerate(hints)} if not all(isinstance(h, int) for h in hints) else {h: h for h in hints}
        membership = {s.client_id: gid[s.region_hint] for s in sites}
        history: tuple[float, ...] = ()
    else:
        if k < 1:
            raise InvalidK(f"k must be >= 1, got {k}")
        if k > len(sites):
            raise TooManyGroups(f"k={k} exceeds {len(sites)} sites")
        labels, _, history = kmeans(_positions(sites), k, seed)
        membership = {cid: int(g) for cid, g in zip(ids, labels)}
    return _finish(membership, pos, history)


def _finish(membership: Mapping[int, int], pos, history=()) -> ClusterAssignment:
    groups: dict[int, list[int]] = {}
    for cid in sorted(membership):
        groups.setdefault(membership[cid], []).append(cid)
    centroids = {}
    drivers = {}
    for g in sorted(groups):
        pts = np.array([pos[c] for c in groups[g]])
        centroids[g] = (float(pts[:, 0].mean()), float(pts[:, 1].mean()))
        drivers[g] = _elect(groups[g], centroids[g], pos)
    return ClusterAssignment(dict(membership), drivers, centroids, tuple(history))


def elect_driver(assignment: ClusterAssignment, group_index: int, sites: Sequence[RobotSite]) -> int:
    """Member nearest the group centroid; ties go to the lowest client id."""
    members = assignment.members(group_index)
    if not members:
        raise EmptyGroup(f"group {group_index} has no members")
    pos = {s.client_id: s.position for s in sites}
    return _elect(members, assignment.centroids[group_index], pos)


def reassign_on_failure(
    assignment: ClusterAssignment, failed_driver: int, sites: Sequence[RobotSite]
) -> ClusterAssignment:
    """Remove a failed driver from the fleet and restore the group invariants.

    Survivors of the failed driver's group elect a new driver around their
    own centroid; a group left empty is dissolved.
    """
    group = next((g for g, d in assignment.drivers.items() if d == failed_driver), None)
    if group is None:
        raise NotADriver(f"client {failed_driver} is not a driver")
    membership = {c: g for c, g in assignment.membership.items() if c != failed_driver}
    drivers = dict(assignment.drivers)
    centroids = dict(assignment.centroids)
    survivors = sorted(c for c, g in membership.items() if g == group)
    if not survivors:
        del drivers[group]
        del centroids[group]
    else:
        pos = {s.client_id: s.position for s in sites}
        pts = np.array([pos[c] for c in survivors])
        centroids[group] = (float(pts[:, 0].mean()), float(pts[:, 1].mean()))
        drivers[group] = _elect(survivors, centroids[group], pos)
    return replace(assignment, membership=membership, drivers=drivers, centroids=centroids)


def generate_sites(num_clients: int, num_fields: int, seed: int = 0,
                   field_size: float = 1000.0, spread: float = 25.0) -> list[RobotSite]:
    """Seeded robot positions: one Gaussian blob per farm field, clients dealt round-robin."""
    rng = np.random.default_rng([seed, 0xF1E1D])
    num_fields = max(1, min(num_fields, num_clients))
    centers = rng.uniform(0.0, field_size, size=(num_fields, 2))
    sites = []
    for cid in range(num_clients):
        c = centers[cid % num_fields]
        x, y = c + spread * rng.standard_normal(2)
        sites.append(RobotSite(cid, (float(x), float(y))))
    return sites
