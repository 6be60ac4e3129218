"""Proximity and covering graphs on ε-nets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .nets import NetIndex
from .spaces import FiniteSpace


@dataclass(frozen=True, eq=False)
class ApproxGraph:
    """Symmetric graph on the members of ``net``.

    Vertex ``k`` is net member ``net.members[k]``; ``adjacency`` is a boolean
    CSR matrix over vertex positions.
    """

    net: NetIndex
    adjacency: sp.csr_matrix
    kind: str
    param: float
    self_loops: bool = True

    @property
    def n_vertices(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def edge_pairs(self) -> np.ndarray:
        """Undirected edges ``(u, v)`` with ``u <= v`` as point ids."""
        coo = sp.triu(self.adjacency).tocoo()
        m = self.net.members
        pairs = np.stack([m[coo.row], m[coo.col]], axis=1)
        return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]

    def jump_radius(self) -> float:
        eps = self.net.epsilon
        return self.param * eps if self.kind == "proximity" else 2 * self.param * eps

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "param": float(self.param),
            "self_loops": bool(self.self_loops),
            "epsilon": float(self.net.epsilon),
            "members": [int(i) for i in self.net.members],
            "edges": [[int(a), int(b)] for a, b in self.edge_pairs()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ApproxGraph":
        net = NetIndex(float(d["epsilon"]), np.asarray(d["members"], dtype=np.intp))
        pos = {int(v): k for k, v in enumerate(net.members)}
        e = np.asarray(d["edges"], dtype=np.intp).reshape(-1, 2)
        a = np.array([pos[int(x)] for x in e[:, 0]], dtype=np.intp)
        b = np.array([pos[int(x)] for x in e[:, 1]], dtype=np.intp)
        return cls(net, _symmetric(a, b, len(net)), d["kind"], float(d["param"]), bool(d.get("self_loops", True)))


def _symmetric(a, b, n) -> sp.csr_matrix:
    rows = np.r_[a, b]
    cols = np.r_[b, a]
    m = sp.coo_matrix((np.ones(rows.size, dtype=bool), (rows, cols)), shape=(n, n)).tocsr()
    m.sum_duplicates()
    m.data[:] = True
    m.sort_indices()
    return m


def _threshold_graph(space: FiniteSpace, net: NetIndex, radius: float, kind: str, param: float, self_loops: bool) -> ApproxGraph:
    m = net.members
    i, j, _ = space.pairs(radius, rows=m, cols=m)
    a = np.searchsorted(m, i)
    b = np.searchsorted(m, j)
    keep = a != b
    a, b = a[keep], b[keep]
    n = m.size
    if self_loops:
        loops = np.arange(n)
    else:
        # an isolated vertex still gets its loop
        deg = np.bincount(a, minlength=n)
        loops = np.flatnonzero(deg == 0)
    return ApproxGraph(net, _symmetric(np.r_[a, loops], np.r_[b, loops], n), kind, float(param), self_loops)


def proximity_graph(space: FiniteSpace, net: NetIndex, rho: float = 2.0, self_loops: bool = True) -> ApproxGraph:
    """Edges between members at distance < rho·ε."""
    if rho < 2:
        raise ValueError("proximity graphs need rho >= 2")
    return _threshold_graph(space, net, rho * net.epsilon, "proximity", rho, self_loops)


def covering_graph(space: FiniteSpace, net: NetIndex, eta: float = 1.0, self_loops: bool = True) -> ApproxGraph:
    """Edges between members whose ηε-balls meet, realised as d < 2ηε."""
    if eta < 1:
        raise ValueError("covering graphs need eta >= 1")
    return _threshold_graph(space, net, 2 * eta * net.epsilon, "covering", eta, self_loops)


def is_connected(graph: ApproxGraph) -> bool:
    if graph.n_vertices <= 1:
        return True
    k, _ = connected_components(graph.adjacency, directed=False)
    return bool(k == 1)


def graph_stats(graph: ApproxGraph) -> dict:
    deg = graph.degrees
    loops = int(graph.adjacency.diagonal().sum())
    edges = (int(graph.adjacency.nnz) - loops) // 2 + loops
    return {"min_degree": int(deg.min()), "max_degree": int(deg.max()), "edge_count": edges}


def doubling_ratio(space: FiniteSpace, radii, centers=None) -> float:
    """sup of mu(B_2r(x)) / mu(B_r(x)) over the sampled centers and radii."""
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0:
        raise ValueError("empty radius grid")
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    if space.n == 1:
        return 1.0
    rows = np.arange(space.n) if centers is None else np.sort(np.asarray(centers, dtype=np.intp))
    best = 0.0
    for r in radii:
        small = space.ball_mass(r, rows=rows)
        big = space.ball_mass(2 * r, rows=rows)
        best = max(best, float(np.max(big / small)))
    return best
