"""Walk kernels: graph walks on nets and ball walks at scale r.

Every kernel is a sparse row-stochastic matrix ``P`` over ``states`` (point
ids of ``space``) together with per-state waiting times, masses and the
density of a measure that makes ``P`` reversible.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graphs import ApproxGraph
from .spaces import FiniteSpace, ScalarField, space_arrays, space_from_arrays

KERNEL_KINDS = ("graph_uniform", "graph_symmetrized", "ball_w", "ball_p")


@dataclass(frozen=True, eq=False)
class WalkKernel:
    """Jump chain with holding times.

    ``pi = stationary_density * state_weights`` satisfies
    ``pi[x] P[x, y] == pi[y] P[y, x]``.
    """

    space: FiniteSpace
    states: np.ndarray
    P: sp.csr_matrix
    waiting: np.ndarray
    state_weights: np.ndarray
    stationary_density: np.ndarray
    kind: str
    jump_radius: float
    extras: dict = field(default_factory=dict)

    @property
    def n_states(self) -> int:
        return self.states.size

    @property
    def pi(self) -> np.ndarray:
        return self.stationary_density * self.state_weights

    def state_index(self, point_id: int) -> int:
        k = int(np.searchsorted(self.states, point_id))
        if k >= self.states.size or self.states[k] != point_id:
            raise ValueError(f"point {point_id} is not a state of this kernel")
        return k

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.P.sum(axis=1)).ravel()


def _normalised(rows, cols, vals, n) -> sp.csr_matrix:
    P = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    P.sum_duplicates()
    P.sort_indices()
    s = np.asarray(P.sum(axis=1)).ravel()
    P.data /= np.repeat(s, np.diff(P.indptr))
    return P


def graph_kernel(graph: ApproxGraph, space: FiniteSpace, mode: str = "symmetrized", weights=None) -> WalkKernel:
    """Uniform or partially symmetrised walk on ``graph``.

    With vertex masses ``m`` (default 1) and ``V_x = sum_{y~x} m_y``:
    uniform ``P = m_y / V_x``; symmetrised
    ``P = (1 + V_x/V_y) m_y / (a_x V_x)`` with ``a_x`` normalising the row.
    """
    A = graph.adjacency.tocsr()
    n = A.shape[0]
    m = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if m.shape != (n,):
        raise ValueError("one weight per vertex required")
    if np.any(m <= 0) or not np.all(np.isfinite(m)):
        raise ValueError("weights must be positive")
    if np.any(np.diff(A.indptr) == 0):
        raise ValueError("graph has isolated vertices")
    coo = A.tocoo()
    i, j = coo.row, coo.col
    V = np.bincount(i, weights=m[j], minlength=n)
    if mode == "uniform":
        P = _normalised(i, j, m[j] / V[i], n)
        density = V.copy()
        kind = "graph_uniform"
        extras = {"V": V}
    elif mode == "symmetrized":
        raw = (1 + V[i] / V[j]) * m[j] / V[i]
        a = np.bincount(i, weights=raw, minlength=n)
        P = _normalised(i, j, raw / a[i], n)
        density = a
        kind = "graph_symmetrized"
        extras = {"V": V, "a": a}
    else:
        raise ValueError(f"unknown graph kernel mode {mode!r}")
    return WalkKernel(space, graph.net.members.copy(), P, np.ones(n), m, density, kind, graph.jump_radius(), extras)


def _ball_pairs(space: FiniteSpace, r: float):
    if not r > 0:
        raise ValueError("r must be positive")
    i, j, _ = space.pairs(r)
    counts = np.bincount(i, minlength=space.n)
    bad = np.flatnonzero(counts < 2)
    if bad.size:
        raise ValueError(f"isolated state at scale r={r}: {bad[:10].tolist()}{' ...' if bad.size > 10 else ''}")
    v = np.bincount(i, weights=space.weights[j], minlength=space.n)
    return i, j, v


def ball_kernel_w(space: FiniteSpace, r: float) -> WalkKernel:
    """Ball walk ``w_r``: jumps to ``y in B_r(x)`` with weight ``(1 + v_x/v_y) mu_y``."""
    i, j, v = _ball_pairs(space, r)
    mu = space.weights
    raw = (1 + v[i] / v[j]) * mu[j] / v[i]
    a = np.bincount(i, weights=raw, minlength=space.n)
    P = _normalised(i, j, raw / a[i], space.n)
    return WalkKernel(space, np.arange(space.n), P, np.ones(space.n), mu.copy(), a, "ball_w", float(r), {"v": v, "a": a, "r": float(r)})


def ball_kernel_p(space: FiniteSpace, r: float, beta) -> WalkKernel:
    """Renormalised ball walk ``p_r`` with waiting time ``r**beta(x)``.

    Uses ``d_r = v_r r**beta``; the jump weight is ``(1 + d_x/d_y) mu_y`` and the
    reversing density is ``q_r / tau_r``.
    """
    b = np.asarray(beta.values if isinstance(beta, ScalarField) else beta, dtype=float)
    if b.ndim == 0:
        b = np.full(space.n, float(b))
    if b.shape != (space.n,) or not np.all(np.isfinite(b)) or np.any(b <= 0):
        raise ValueError("beta must be finite, positive, one value per point")
    i, j, v = _ball_pairs(space, r)
    mu = space.weights
    tau = float(r) ** b
    d = v * tau
    # ratio split so that constant beta reproduces w_r bit for bit
    raw = (1 + (v[i] / v[j]) * (tau[i] / tau[j])) * mu[j] / v[i]
    q = np.bincount(i, weights=raw, minlength=space.n)
    P = _normalised(i, j, raw / q[i], space.n)
    extras = {"v": v, "q": q, "d": d, "tau": tau, "r": float(r), "beta": b}
    return WalkKernel(space, np.arange(space.n), P, tau, mu.copy(), q / tau, "ball_p", float(r), extras)


def build_kernel(space: FiniteSpace, kind: str, scale: float, *, beta=None, net=None, graph_kind: str = "proximity", graph_param: float = 2.0, weighted: bool = False) -> WalkKernel:
    """Dispatch on ``kind``; graph kinds need ``net`` (an ε-net at ``scale``)."""
    if kind == "ball_w":
        return ball_kernel_w(space, scale)
    if kind == "ball_p":
        if beta is None:
            raise ValueError("ball_p needs beta")
        return ball_kernel_p(space, scale, beta)
    if kind in ("graph_uniform", "graph_symmetrized"):
        from .graphs import covering_graph, proximity_graph
        from .nets import build_voronoi_tiling

        if net is None:
            raise ValueError("graph kernels need a net")
        g = proximity_graph(space, net, graph_param) if graph_kind == "proximity" else covering_graph(space, net, graph_param)
        w = None
        if weighted:
            tiling = build_voronoi_tiling(space, net)
            owner = np.searchsorted(net.members, tiling.assignment)
            w = np.bincount(owner, weights=space.weights, minlength=len(net))
        return graph_kernel(g, space, "uniform" if kind == "graph_uniform" else "symmetrized", w)
    raise ValueError(f"unknown kernel kind {kind!r}")


def generator_apply(kernel: WalkKernel, f) -> np.ndarray:
    """``(1/waiting) (I - P) f``."""
    f = np.asarray(f, dtype=float)
    if f.shape != (kernel.n_states,):
        raise ValueError("f must have one value per state")
    if not np.all(np.isfinite(f)):
        raise ValueError("f must be finite")
    return (f - kernel.P @ f) / kernel.waiting


def detailed_balance_violation(kernel: WalkKernel, density=None, relative: bool = False) -> float:
    """max |pi(x)P(x,y) - pi(y)P(y,x)| over stored entries.

    ``pi = density * state_weights``; ``density`` defaults to the kernel's
    stationary density. With ``relative`` the defect is divided by
    ``max(pi(x)P(x,y), pi(y)P(y,x))``.
    """
    dens = kernel.stationary_density if density is None else np.asarray(density, dtype=float)
    pi = dens * kernel.state_weights
    F = sp.diags(pi) @ kernel.P
    D = (F - F.T).tocoo()
    if D.nnz == 0:
        return 0.0
    defect = np.abs(D.data)
    if relative:
        Fc = F.tocsr()
        a = np.asarray(Fc[D.row, D.col]).ravel()
        b = np.asarray(Fc[D.col, D.row]).ravel()
        defect = defect / np.maximum(np.maximum(a, b), np.finfo(float).tiny)
    return float(defect.max())


def support_radius(kernel: WalkKernel) -> float:
    """Largest distance between a state and a state it can jump to."""
    coo = kernel.P.tocoo()
    sp_space = kernel.space
    a, b = kernel.states[coo.row], kernel.states[coo.col]
    if sp_space.metric == "euclidean":
        return float(np.sqrt(((sp_space.points[a] - sp_space.points[b]) ** 2).sum(axis=1)).max())
    from scipy.sparse.csgraph import dijkstra

    d = dijkstra(sp_space.adjacency, indices=kernel.states, unweighted=True)[:, kernel.states]
    return float(d[coo.row, coo.col].max())


# ---------------------------------------------------------------------------
# persistence


def save_kernel(kernel: WalkKernel, path) -> None:
    """Binary ``.npz`` archive: CSR triplets, waiting, densities and the space."""
    arrays = space_arrays(kernel.space)
    arrays.update(
        indptr=kernel.P.indptr,
        indices=kernel.P.indices,
        data=kernel.P.data,
        states=kernel.states,
        waiting=kernel.waiting,
        state_weights=kernel.state_weights,
        stationary_density=kernel.stationary_density,
    )
    header = {"kind": kernel.kind, "jump_radius": kernel.jump_radius}
    arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_kernel(path) -> WalkKernel:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(bytes(z["header"]).decode())
        n = z["states"].size
        P = sp.csr_matrix((z["data"], z["indices"], z["indptr"]), shape=(n, n))
        space = space_from_arrays(z)
        return WalkKernel(space, np.array(z["states"]), P, np.array(z["waiting"]), np.array(z["state_weights"]), np.array(z["stationary_density"]), header["kind"], header["jump_radius"])


def dump_kernel_csv(kernel: WalkKernel, path) -> None:
    """``row,col,value`` triplets with point ids."""
    coo = kernel.P.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write("row,col,value\n")
        for k in order:
            fh.write(f"{int(kernel.states[coo.row[k]])},{int(kernel.states[coo.col[k]])},{float(coo.data[k]):.17g}\n")
