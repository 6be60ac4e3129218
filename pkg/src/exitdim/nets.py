"""ε-nets, Voronoi tilings and nested dyadic cubes on a finite space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .spaces import FiniteSpace


@dataclass(frozen=True, eq=False)
class NetIndex:
    """An ε-net given by sorted member ids.

    ``order`` keeps the insertion order of the greedy construction (extension
    members first); tie-breaking in tilings uses the sorted ``members``.
    """

    epsilon: float
    members: np.ndarray
    seed: int | None = None
    order: np.ndarray | None = None

    def __post_init__(self):
        m = np.asarray(self.members, dtype=np.intp)
        object.__setattr__(self, "members", np.sort(m))
        if self.order is None:
            object.__setattr__(self, "order", m.copy())
        else:
            object.__setattr__(self, "order", np.asarray(self.order, dtype=np.intp))
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def __len__(self):
        return self.members.size

    def to_dict(self) -> dict:
        return {"epsilon": float(self.epsilon), "members": [int(i) for i in self.members], "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "NetIndex":
        return cls(float(d["epsilon"]), np.asarray(d["members"], dtype=np.intp), d.get("seed"))


@dataclass(frozen=True, eq=False)
class Tiling:
    net: NetIndex
    assignment: np.ndarray  # owning member id per point

    def tiles(self) -> dict[int, np.ndarray]:
        order = np.argsort(self.assignment, kind="stable")
        owners, starts = np.unique(self.assignment[order], return_index=True)
        parts = np.split(order, starts[1:])
        return {int(o): p for o, p in zip(owners, parts)}


@dataclass(frozen=True, eq=False)
class CubeTree:
    """Nested partitions: ``labels[k][p]`` is the level-k center owning point p."""

    ratio: float
    nets: list
    labels: list
    parents: list  # parents[k][c] = level-(k-1) center of level-k center c (k >= 1)

    @property
    def depth(self) -> int:
        return len(self.nets)

    def cubes(self, k: int) -> dict[int, np.ndarray]:
        return Tiling(self.nets[k], self.labels[k]).tiles()


def build_epsilon_net(space: FiniteSpace, epsilon: float, seed: int | None = 0, extend_from: NetIndex | None = None) -> NetIndex:
    """Greedy maximal ε-separated set over a seeded random scan order.

    Points of ``extend_from`` are taken first; a point is added when its
    distance to every chosen member is at least ``epsilon``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    n = space.n
    blocked = np.zeros(n, dtype=bool)
    chosen: list[int] = []

    def take(i: int):
        chosen.append(int(i))
        blocked[space.ball(i, epsilon)] = True

    if extend_from is not None:
        for i in extend_from.order:
            if blocked[i]:
                raise ValueError(f"extend_from is not {epsilon}-separated (member {int(i)})")
            take(i)
    order = np.arange(n) if seed is None else np.random.default_rng(seed).permutation(n)
    for i in order:
        if not blocked[i]:
            take(i)
    return NetIndex(float(epsilon), np.asarray(chosen, dtype=np.intp), seed, np.asarray(chosen, dtype=np.intp))


def nearest_member(space: FiniteSpace, members: np.ndarray, radius: float) -> np.ndarray:
    """For every point, the nearest of ``members`` (ties to the lowest id).

    Every point must lie within ``radius`` of some member.
    """
    members = np.sort(np.asarray(members, dtype=np.intp))
    i, j, d = space.pairs(radius, closed=True, rows=np.arange(space.n), cols=members)
    # lexsort: by point, then distance, then member id
    order = np.lexsort((j, d, i))
    i, j = i[order], j[order]
    first = np.r_[True, i[1:] != i[:-1]]
    out = np.full(space.n, -1, dtype=np.intp)
    out[i[first]] = j[first]
    if np.any(out < 0):
        raise ValueError("some points are not covered by the net")
    return out


def build_voronoi_tiling(space: FiniteSpace, net: NetIndex) -> Tiling:
    """Assign each point to its nearest net member; ties go to the lowest id."""
    return Tiling(net, nearest_member(space, net.members, net.epsilon))


def build_dyadic_cubes(space: FiniteSpace, r: float, depth: int, seed: int | None = 0) -> CubeTree:
    """Nested r^k-nets and the cubes traced by nearest-parent chains.

    Level-k centers are mapped to their nearest level-(k-1) center; a point
    belongs to cube Q_{k,i} when its chain of nearest-center maps from the
    finest level reaches x_{k,i}.
    """
    if not (0 < r < 1 / 3):
        raise ValueError("ratio must be < 1/3 (and positive)")
    if depth < 1 or int(depth) != depth:
        raise ValueError("depth must be a positive integer")
    nets: list[NetIndex] = []
    prev = None
    for k in range(depth):
        net = build_epsilon_net(space, r**k, seed=None if seed is None else seed + k, extend_from=prev)
        nets.append(net)
        prev = net
    parents: list = [None]
    for k in range(1, depth):
        sub = space.restrict(nets[k].members) if space.metric == "euclidean" else None
        if sub is not None:
            coarse_pos = np.searchsorted(nets[k].members, nets[k - 1].members)
            loc = nearest_member(sub, coarse_pos, r ** (k - 1))
            par = np.full(space.n, -1, dtype=np.intp)
            par[nets[k].members] = nets[k].members[loc]
        else:
            full = nearest_member(space, nets[k - 1].members, r ** (k - 1))
            par = np.full(space.n, -1, dtype=np.intp)
            par[nets[k].members] = full[nets[k].members]
        parents.append(par)
    labels: list = [None] * depth
    labels[depth - 1] = nearest_member(space, nets[depth - 1].members, r ** (depth - 1))
    for k in range(depth - 2, -1, -1):
        labels[k] = parents[k + 1][labels[k + 1]]
    return CubeTree(float(r), nets, labels, parents)


def verify_net(space: FiniteSpace, net: NetIndex) -> dict:
    """Exact separation and covering check."""
    m = np.asarray(net.members, dtype=np.intp)
    eps = net.epsilon
    if m.size == 0:
        return {"min_separation": 0.0, "max_covering_radius": float("inf"), "ok": False}
    if np.unique(m).size < m.size:
        min_sep = 0.0
    elif m.size == 1:
        min_sep = float("inf")
    else:
        # only pairs closer than eps matter; otherwise report the true minimum
        i, j, d = space.pairs(eps, rows=m, cols=m)
        off = i != j
        if np.any(off):
            min_sep = float(d[off].min())
        elif m.size <= 3000:
            dm = space.distance_matrix(m)
            min_sep = float(dm[~np.eye(m.size, dtype=bool)].min())
        else:
            min_sep = float(eps)
    covering = _covering_radius(space, m, eps)
    return {"min_separation": min_sep, "max_covering_radius": covering, "ok": bool(min_sep >= eps and covering < eps)}


def _covering_radius(space: FiniteSpace, members: np.ndarray, eps: float) -> float:
    if space.metric == "euclidean":
        d, _ = cKDTree(space.points[members]).query(space.points)
        return float(d.max())
    d = dijkstra(space.adjacency, indices=members, unweighted=True, min_only=True)
    return float(d.max())


def verify_cube_tree(space: FiniteSpace, tree: CubeTree) -> dict:
    """Check nesting, the net property of the centers and ball containment."""
    r = tree.ratio
    inner = (1 - 3 * r) / (2 - 2 * r)
    outer = 1 / (1 - r)
    nesting = True
    for k in range(1, tree.depth):
        # every level-k cube must sit inside one level-(k-1) cube
        pair = np.stack([tree.labels[k], tree.labels[k - 1]], axis=1)
        uniq = np.unique(pair, axis=0)
        if np.unique(uniq[:, 0]).size != uniq.shape[0]:
            nesting = False
    nets_ok = all(verify_net(space, net)["ok"] for net in tree.nets)
    nested_nets = all(np.isin(tree.nets[k - 1].members, tree.nets[k].members).all() for k in range(1, tree.depth))
    inner_ok = outer_ok = True
    for k in range(tree.depth):
        scale = r**k
        lab = tree.labels[k]
        centers = tree.nets[k].members
        i, j, d = space.pairs(inner * scale, rows=centers)
        if np.any(lab[j] != i):
            inner_ok = False
        dist = _dist_to_label(space, lab)
        if np.any(dist > outer * scale * (1 + 1e-12)):
            outer_ok = False
    return {
        "nesting": bool(nesting),
        "nets": bool(nets_ok and nested_nets),
        "inner_ball": bool(inner_ok),
        "outer_ball": bool(outer_ok),
        "ok": bool(nesting and nets_ok and nested_nets and inner_ok and outer_ok),
    }


def _dist_to_label(space: FiniteSpace, lab: np.ndarray) -> np.ndarray:
    if space.metric == "euclidean":
        return np.sqrt(((space.points - space.points[lab]) ** 2).sum(axis=1))
    out = np.empty(space.n)
    for c in np.unique(lab):
        sel = np.flatnonzero(lab == c)
        out[sel] = space.distances_from(int(c), sel)
    return out
