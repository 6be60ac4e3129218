"""Mean exit times from balls.

The exit field solves ``(I - P_BB) phi = waiting`` on the ball and vanishes
outside. The matrix is assembled in Laplacian form: the diagonal is the total
off-diagonal mass of the row (including what leaks out of the ball), so
rounding in the row sums of ``P`` cannot inject or remove mass. A sparse LU
solve is refined against an extended-precision residual.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order
from scipy.sparse.linalg import cg, splu

from ._parallel import map_blocks
from .kernels import WalkKernel

DIRECT_LIMIT = 200_000
MC_BLOCK = 1024


@dataclass(frozen=True, eq=False)
class BallRegion:
    """Closed (or open) ball around a kernel state, as a mask over states."""

    center: int  # point id
    radius: float
    mask: np.ndarray
    closed: bool = True

    @property
    def ids(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def size(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True, eq=False)
class ExitField:
    region: BallRegion
    values: np.ndarray
    residual: float
    solver: str
    iterations: int = 0

    def max(self) -> float:
        return float(self.values.max())


def state_distances(kernel: WalkKernel, center: int) -> np.ndarray:
    """Distance from point ``center`` to every kernel state."""
    return kernel.space.distances_from(center, kernel.states)


def ball_region(kernel: WalkKernel, center: int, radius: float, closed: bool = True) -> BallRegion:
    kernel.state_index(center)
    d = state_distances(kernel, center)
    mask = d <= radius if closed else d < radius
    if mask.all():
        raise ValueError("ball covers every state; complement is empty")
    return BallRegion(int(center), float(radius), mask, closed)


def region_from_mask(kernel: WalkKernel, mask, center: int | None = None) -> BallRegion:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (kernel.n_states,):
        raise ValueError("mask must have one entry per state")
    if not mask.any():
        raise ValueError("empty region")
    if mask.all():
        raise ValueError("region covers every state; complement is empty")
    c = int(kernel.states[np.flatnonzero(mask)[0]]) if center is None else int(center)
    return BallRegion(c, float("nan"), mask, True)


def _restricted(P: sp.csr_matrix, idx: np.ndarray) -> sp.csr_matrix:
    return P[idx][:, idx].tocsr()


def unreachable_states(kernel: WalkKernel, region: BallRegion) -> np.ndarray:
    """Masked states from which the chain can never leave the region."""
    idx = region.ids
    m = idx.size
    T = _restricted(kernel.P, idx).T.tocoo()
    leaking = np.flatnonzero(_rows_touching_outside(kernel.P, region.mask)[idx])
    # reversed support plus a virtual source (index m) feeding every leaking state
    rows = np.r_[T.row, np.full(leaking.size, m)]
    cols = np.r_[T.col, leaking]
    G = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(m + 1, m + 1))
    order = breadth_first_order(G, m, directed=True, return_predecessors=False)
    seen = np.zeros(m + 1, dtype=bool)
    seen[order] = True
    return idx[~seen[:m]]


def _rows_touching_outside(P: sp.csr_matrix, mask: np.ndarray) -> np.ndarray:
    outside = ~mask[P.indices]
    hits = np.zeros(P.shape[0], dtype=bool)
    rows = np.repeat(np.arange(P.shape[0]), np.diff(P.indptr))
    hits[rows[outside & (P.data > 0)]] = True
    return hits


def killed_system(kernel: WalkKernel, region: BallRegion) -> sp.csr_matrix:
    """``I - P_BB`` in Laplacian form over the masked states."""
    idx = region.ids
    P = kernel.P
    rows = np.repeat(np.arange(P.shape[0]), np.diff(P.indptr))
    off = rows != P.indices
    diag = np.bincount(rows[off], weights=P.data[off], minlength=P.shape[0])[idx]
    PB = _restricted(P, idx)
    PB.setdiag(0)
    PB.eliminate_zeros()
    return (sp.diags(diag) - PB).tocsr()


def _matvec_ld(A: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    """CSR mat-vec accumulated in long double."""
    xl = x.astype(np.longdouble)
    prod = A.data.astype(np.longdouble) * xl[A.indices]
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    out = np.zeros(A.shape[0], dtype=np.longdouble)
    np.add.at(out, rows, prod)
    return out


def solve_exit_times(kernel: WalkKernel, region: BallRegion, *, refine: int = 6, tol: float = 1e-9, iterative_tol: float = 1e-7, method: str = "auto") -> ExitField:
    """Mean exit times ``phi`` with ``phi = waiting + P phi`` on the region."""
    bad = unreachable_states(kernel, region)
    if bad.size:
        raise ValueError(f"complement unreachable from {bad.size} masked states, e.g. {kernel.states[bad[:10]].tolist()}")
    idx = region.ids
    A = killed_system(kernel, region)
    b = kernel.waiting[idx]
    m = idx.size
    if method == "auto":
        method = "direct" if m <= DIRECT_LIMIT else "cg"
    iters = 0
    if method == "direct":
        lu = splu(A.tocsc())
        x = lu.solve(b)
        bl = b.astype(np.longdouble)
        for _ in range(refine):
            res = bl - _matvec_ld(A, x)
            dx = lu.solve(np.asarray(res, dtype=float))
            x = x + dx
            iters += 1
            if np.max(np.abs(dx)) <= 1e-17 * max(np.max(np.abs(x)), 1.0):
                break
    elif method == "cg":
        # symmetric form: D A with D = pi on the region
        pi = kernel.pi[idx]
        s = np.sqrt(pi)
        S = (sp.diags(s) @ A @ sp.diags(1 / s)).tocsr()
        S = 0.5 * (S + S.T)
        pre = sp.diags(1 / S.diagonal())
        y, info = cg(S, s * b, rtol=1e-13, atol=0.0, maxiter=20 * m, M=pre)
        if info != 0:
            raise RuntimeError(f"conjugate gradients did not converge (info={info})")
        x = y / s
        iters = 1
    else:
        raise ValueError(f"unknown method {method!r}")
    phi = np.zeros(kernel.n_states)
    phi[idx] = x
    resid = exit_residual(kernel, region, phi)
    limit = tol if method == "direct" else iterative_tol
    scale = max(1.0, float(np.max(np.abs(x))))
    if not resid <= limit * scale:
        raise RuntimeError(f"exit solve residual {resid:.3e} above tolerance")
    return ExitField(region, phi, resid, method, iters)


def exit_residual(kernel: WalkKernel, region: BallRegion, phi) -> float:
    """max over the region of |phi - waiting - P phi|."""
    idx = region.ids
    A = killed_system(kernel, region)
    r = kernel.waiting[idx].astype(np.longdouble) - _matvec_ld(A, np.asarray(phi)[idx])
    return float(np.max(np.abs(r)))


def exit_time_max(field: ExitField) -> float:
    """E+ of the region: the largest mean exit time."""
    return float(field.values.max())


# ---------------------------------------------------------------------------
# Monte Carlo


class _Sampler:
    """Vectorised sampling of the next state for many walkers at once."""

    def __init__(self, P: sp.csr_matrix):
        P = P.tocsr()
        self.indptr = P.indptr
        self.indices = P.indices
        rows = np.repeat(np.arange(P.shape[0]), np.diff(P.indptr))
        inrow = np.cumsum(P.data)
        starts = np.r_[0.0, inrow][P.indptr[:-1]]
        inrow = inrow - np.repeat(starts, np.diff(P.indptr))
        self.rowsum = np.add.reduceat(P.data, P.indptr[:-1]) if P.nnz else np.zeros(P.shape[0])
        self.keys = rows + inrow
        self.n = P.shape[0]

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        target = x + u * self.rowsum[x]
        k = np.searchsorted(self.keys, target, side="right")
        k = np.clip(k, self.indptr[x], self.indptr[x + 1] - 1)
        return self.indices[k]


def _block_seeds(seed: int, n_paths: int):
    n_blocks = -(-n_paths // MC_BLOCK)
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    sizes = [min(MC_BLOCK, n_paths - k * MC_BLOCK) for k in range(n_blocks)]
    return list(zip(children, sizes))


def _simulate(kernel: WalkKernel, mask: np.ndarray, start: int, size: int, ss, holding: str, max_steps: int):
    rng = np.random.default_rng(ss)
    sampler = _Sampler(kernel.P)
    x = np.full(size, start, dtype=np.intp)
    t = np.zeros(size)
    alive = np.arange(size)
    steps = 0
    while alive.size:
        if steps >= max_steps:
            raise RuntimeError(f"walkers still inside after {max_steps} steps")
        cur = x[alive]
        w = kernel.waiting[cur]
        t[alive] += w if holding == "mean" else rng.exponential(w)
        nxt = sampler.step(cur, rng.random(alive.size))
        x[alive] = nxt
        alive = alive[mask[nxt]]
        steps += 1
    return t


def _check_start(kernel: WalkKernel, region: BallRegion, start: int) -> int:
    k = kernel.state_index(start)
    if not region.mask[k]:
        raise ValueError("start state is outside the region")
    return k


def simulate_exit_times(kernel: WalkKernel, region: BallRegion, start: int, n_paths: int, seed: int = 0, holding: str = "mean", max_steps: int = 10**8) -> np.ndarray:
    """Exit times of ``n_paths`` independent walkers from point ``start``."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    k = _check_start(kernel, region, start)
    blocks = _block_seeds(seed, n_paths)
    parts = map_blocks(lambda b: _simulate(kernel, region.mask, k, b[1], b[0], holding, max_steps), blocks)
    return np.concatenate(parts)


def monte_carlo_exit(kernel: WalkKernel, region: BallRegion, start: int, n_paths: int, seed: int = 0) -> dict:
    """Sample mean of waiting-time weighted exit times and its standard error."""
    t = simulate_exit_times(kernel, region, start, n_paths, seed)
    stderr = float(t.std(ddof=1) / np.sqrt(t.size)) if t.size > 1 else float("nan")
    if t.size > 1 and np.all(t == t[0]):
        stderr = 0.0
    return {"mean": float(t.mean()), "stderr": stderr, "n_paths": int(t.size)}


def exit_tail_estimate(kernel: WalkKernel, region: BallRegion, start: int, t, n_paths: int, seed: int = 0):
    """Empirical P(exit time <= t) with exponential holding times.

    ``t`` may be a scalar or an array; the same sampled paths serve every t.
    """
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0):
        raise ValueError("t must be nonnegative")
    times = np.sort(simulate_exit_times(kernel, region, start, n_paths, seed, holding="exponential"))
    p = np.searchsorted(times, tt, side="right") / times.size
    return float(p) if p.ndim == 0 else p
