"""Killed operators, Green functions and Dirichlet-form diagnostics.

All eigen-computations use the symmetrised operators
``D^{1/2} P_B D^{-1/2}`` (``D = pi``) and ``(D T)^{1/2} T^{-1}(I - P_B) (D T)^{-1/2}``
with ``T = diag(waiting)``, so the spectra are real.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, splu

from .exit import BallRegion, _matvec_ld, _restricted, ball_region, killed_system, solve_exit_times, unreachable_states
from .exponents import ScaleSeries, SweepConfig, jump_radius, local_problem
from .kernels import WalkKernel, ball_kernel_p, ball_kernel_w, build_kernel
from .nets import NetIndex, build_epsilon_net
from .spaces import FiniteSpace, ScalarField

DENSE_GREEN_LIMIT = 5000


@dataclass(frozen=True, eq=False)
class KilledOperator:
    """``chi_B P chi_B`` over the masked states, plus the Laplacian-form ``I - P_B``."""

    kernel: WalkKernel
    region: BallRegion
    idx: np.ndarray
    P_B: sp.csr_matrix
    A: sp.csr_matrix

    @property
    def size(self) -> int:
        return self.idx.size

    @property
    def pi(self) -> np.ndarray:
        return self.kernel.pi[self.idx]

    @property
    def waiting(self) -> np.ndarray:
        return self.kernel.waiting[self.idx]

    @property
    def mu(self) -> np.ndarray:
        return self.kernel.state_weights[self.idx]

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.P_B.sum(axis=1)).ravel()

    def lu(self):
        if "_lu" not in self.__dict__:
            object.__setattr__(self, "_lu", splu(self.A.tocsc()))
        return self.__dict__["_lu"]


def killed_operator(kernel: WalkKernel, region: BallRegion) -> KilledOperator:
    idx = region.ids
    if idx.size == 0:
        raise ValueError("empty region")
    if idx.size == kernel.n_states:
        raise ValueError("region covers every state; complement is empty")
    bad = unreachable_states(kernel, region)
    if bad.size:
        raise ValueError(f"complement unreachable from {bad.size} masked states")
    return KilledOperator(kernel, region, idx, _restricted(kernel.P, idx), killed_system(kernel, region))


def _sym(op: KilledOperator, M: sp.csr_matrix, d: np.ndarray) -> sp.csr_matrix:
    s = np.sqrt(d)
    S = (sp.diags(s) @ M @ sp.diags(1 / s)).tocsr()
    return (0.5 * (S + S.T)).tocsr()


def _solve_refined(op: KilledOperator, b: np.ndarray, steps: int = 2) -> np.ndarray:
    lu = op.lu()
    x = lu.solve(b)
    for _ in range(steps):
        r = b.astype(np.longdouble) - _matvec_ld(op.A, x)
        x = x + lu.solve(np.asarray(r, dtype=float))
    return x


def spectral_radius_killed(op: KilledOperator, tol: float = 1e-10, maxiter: int = 100_000, method: str = "auto") -> dict:
    """Top eigenvalue of the symmetrised killed chain.

    ``power`` runs plain power iteration; ``inverse`` (the default for more
    than 50 states) iterates with ``(I - P_B)^{-1}``, whose top eigenvector is
    the same, and is much faster when the gap ``1 - rho`` is small. The
    Collatz-Wielandt bound with the positive vector ``phi = (I - P_B)^{-1} 1``
    certifies ``rho <= 1 - 1 / max(phi)``.
    """
    m = op.size
    if m == 1:
        rho = float(op.P_B[0, 0])
        return {"rho": rho, "upper_bound": rho, "iterations": 0, "method": "exact", "gap": 1.0 - rho}
    if method == "auto":
        method = "inverse" if m > 50 else "power"
    pi = op.pi
    v = np.ones(m) / np.sqrt(m)
    it = 0
    if method == "power":
        S = _sym(op, op.P_B, pi)
        lam = 0.0
        for it in range(1, maxiter + 1):
            w = S @ v
            lam_new = float(v @ w)
            nrm = np.linalg.norm(w)
            if nrm == 0:
                return {"rho": 0.0, "upper_bound": 0.0, "iterations": it, "method": method, "gap": 1.0}
            v = w / nrm
            if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
                lam = lam_new
                break
            lam = lam_new
        else:
            raise RuntimeError("power iteration did not converge")
        gap = 1.0 - lam
    elif method == "inverse":
        u = v / np.sqrt(pi)
        gap = None
        for it in range(1, maxiter + 1):
            w = _solve_refined(op, u)
            # Rayleigh quotient of I - P_B in the pi inner product
            Aw = np.asarray(_matvec_ld(op.A, w), dtype=float)
            g_new = float((pi * w * Aw).sum() / (pi * w * w).sum())
            u = w / np.sqrt((pi * w * w).sum())
            if gap is not None and abs(g_new - gap) <= tol * abs(g_new):
                gap = g_new
                break
            gap = g_new
        else:
            raise RuntimeError("inverse iteration did not converge")
        lam = 1.0 - gap
    else:
        raise ValueError(f"unknown method {method!r}")
    phi = _solve_refined(op, np.ones(m))
    cw_gap = float(np.min(1.0 / phi))
    return {"rho": float(1.0 - gap), "upper_bound": float(1.0 - cw_gap), "gap": float(gap), "certified_gap": cw_gap, "iterations": it, "method": method}


@dataclass(frozen=True, eq=False)
class GreenMatrix:
    """Neumann sum ``M = sum_k P_B^k`` and the derived kernels.

    ``G = M / mu_y * tau_y`` is the kernel against ``mu`` (row integrals give
    the exit times); ``g = M / pi_y`` is the symmetric version.
    """

    M: np.ndarray | None
    mu: np.ndarray
    tau: np.ndarray
    pi: np.ndarray
    truncation_bound: float
    n_terms: int
    operator: LinearOperator | None = None
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> np.ndarray:
        return self.M / self.mu[None, :]

    @property
    def G(self) -> np.ndarray:
        return self.M * (self.tau / self.mu)[None, :]

    @property
    def g(self) -> np.ndarray:
        return self.M / self.pi[None, :]

    def exit_times(self) -> np.ndarray:
        """Row integrals of G against mu."""
        if self.M is not None:
            return self.M @ self.tau
        return self.operator.matvec(self.tau)

    def symmetry_violation(self, n_samples: int = 200, seed: int = 0, relative: bool = True) -> float:
        """max |g(x,y) - g(y,x)|, divided by max |g| when ``relative``.

        Only sampled columns are inspected when just matvecs exist.
        """
        if self.M is not None:
            g = self.g
            v = float(np.max(np.abs(g - g.T)))
            return v / float(np.max(np.abs(g))) if relative else v
        rng = np.random.default_rng(seed)
        m = self.mu.size
        cols = rng.choice(m, size=min(n_samples, m), replace=False)
        E = np.zeros((m, cols.size))
        E[cols, np.arange(cols.size)] = 1.0
        block = np.column_stack([self.operator.matvec(E[:, k]) for k in range(cols.size)])  # M[:, cols]
        gb = block / self.pi[cols][None, :]
        sub = gb[cols, :]
        v = float(np.max(np.abs(sub - sub.T)))
        return v / float(np.max(np.abs(gb))) if relative else v


def green_matrix(op: KilledOperator, tol: float = 1e-14, max_terms: int = 2**40, method: str = "neumann") -> GreenMatrix:
    """Green kernels of the killed walk.

    ``neumann`` sums the series by repeated squaring,
    ``M_{2N} = M_N (I + P^N)``, until ``rho**N / (1 - rho) < tol`` (a bound in
    the pi-weighted operator norm). Above ``DENSE_GREEN_LIMIT`` states only a
    matrix-free operator is returned, applied through the sparse factorisation
    of ``I - P_B`` (the limit of the same series).
    """
    m = op.size
    rad = spectral_radius_killed(op)
    rho = max(rad["upper_bound"], rad["rho"])
    if not rho < 1:
        raise ValueError("spectral radius is not below 1; the Neumann series diverges")
    if m > DENSE_GREEN_LIMIT or method == "operator":
        lin = LinearOperator((m, m), matvec=lambda b: _solve_refined(op, np.asarray(b, dtype=float).ravel()), dtype=float)
        return GreenMatrix(None, op.mu, op.waiting, op.pi, 0.0, -1, lin, {"rho": rho})
    if method == "solve":
        M = np.linalg.solve(op.A.toarray(), np.eye(m))
        return GreenMatrix(M, op.mu, op.waiting, op.pi, 0.0, -1, None, {"rho": rho})
    P = op.P_B.toarray()
    M = np.eye(m) + P  # sum of the first 2 terms
    Pn = P @ P
    N = 2
    bound = rho**N / (1 - rho)
    while bound >= tol:
        if N >= max_terms:
            raise RuntimeError(f"Neumann tail bound {bound:.3e} not reached within {max_terms} terms")
        M = M + Pn @ M
        Pn = Pn @ Pn
        N *= 2
        bound = rho**N / (1 - rho) if rho > 0 else 0.0
        if not np.any(Pn):
            bound = 0.0
    return GreenMatrix(M, op.mu, op.waiting, op.pi, float(bound), N, None, {"rho": rho})


def bottom_eigenvalue(op: KilledOperator, tol: float = 1e-8, maxiter: int = 10_000) -> dict:
    """Smallest eigenvalue of ``T^{-1}(I - P_B)``, self-adjoint on ``pi * tau``.

    Inverse iteration with the sparse factorisation of ``I - P_B``.
    """
    tau = op.waiting
    pi = op.pi
    w8 = pi * tau
    m = op.size
    if m == 1:
        lam = float(op.A[0, 0]) / float(tau[0])
        return {"lambda1": lam, "iterations": 0, "vector": np.ones(1)}
    x = np.ones(m)
    lam = None
    for it in range(1, maxiter + 1):
        y = _solve_refined(op, tau * x, steps=1)
        Ay = np.asarray(_matvec_ld(op.A, y), dtype=float)
        lam_new = float((pi * y * Ay).sum() / (w8 * y * y).sum())
        x = y / np.sqrt((w8 * y * y).sum())
        if lam is not None and abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    else:
        raise RuntimeError("inverse iteration did not converge")
    return {"lambda1": float(lam), "iterations": it, "vector": x}


def rayleigh_quotient(op: KilledOperator, f) -> float:
    """``<f, T^{-1}(I-P_B) f>_{pi tau} / <f, f>_{pi tau}`` for f on the region."""
    f = np.asarray(f, dtype=float)
    Af = np.asarray(_matvec_ld(op.A, f), dtype=float)
    return float((op.pi * f * Af).sum() / (op.pi * op.waiting * f * f).sum())


# ---------------------------------------------------------------------------
# Faber-Krahn and tent functions


def _local_kernel(space: FiniteSpace, center: int, R: float, scale: float, cfg: SweepConfig, beta=None, seed=0):
    J = jump_radius(cfg.kernel_kind, scale, cfg)
    sub, c = local_problem(space, center, R, J)
    net = None
    if cfg.kernel_kind.startswith("graph"):
        net = build_epsilon_net(sub, scale, seed=seed, extend_from=NetIndex(scale, np.array([c])))
    b = None
    if beta is not None:
        bv = np.asarray(beta.values if isinstance(beta, ScalarField) else beta, dtype=float)
        b = float(bv) if bv.ndim == 0 else (bv[sub.meta["parent_ids"]] if sub is not space else bv)
    K = build_kernel(sub, cfg.kernel_kind, scale, beta=b, net=net, graph_kind=cfg.graph_kind, graph_param=cfg.graph_param, weighted=cfg.weighted)
    return K, c


def faber_krahn_constant(space: FiniteSpace, centers, R_grid, scale_grid, kernel_kind: str = "ball_w", beta=None, cfg: SweepConfig | None = None, with_tent: bool = True) -> dict:
    """Table of lambda_1 * E+ over the (center, R, scale) sweep.

    ``scale_grid`` is an array or a callable ``R -> grid``. With ``beta`` the
    table also carries ``lambda_1 * R**beta(center)``.
    """
    if cfg is None:
        cfg = SweepConfig(kernel_kind=kernel_kind, net_seeds=(0,))
    table = []
    for c in np.asarray(centers, dtype=np.intp):
        for R in np.asarray(R_grid, dtype=float):
            grid = scale_grid(R) if callable(scale_grid) else np.asarray(scale_grid, dtype=float)
            for s in grid:
                K, cc = _local_kernel(space, int(c), float(R), float(s), cfg, beta)
                reg = ball_region(K, cc, float(R), closed=cfg.closed)
                op = killed_operator(K, reg)
                phi = solve_exit_times(K, reg)
                lam = bottom_eigenvalue(op)["lambda1"]
                row = {"center": int(c), "R": float(R), "scale": float(s), "lambda1": lam, "e_plus": phi.max(), "fk": lam * phi.max(), "n_states": op.size}
                row["rayleigh_phi"] = rayleigh_quotient(op, phi.values[reg.mask])
                if beta is not None:
                    bv = np.asarray(beta.values if isinstance(beta, ScalarField) else beta, dtype=float)
                    row["fk_R"] = lam * R ** float(bv if bv.ndim == 0 else bv[c])
                if with_tent and cfg.kernel_kind == "ball_w":
                    tr = _tent_from_kernel(K, op, cc, float(R), float(s))
                    row.update(tent_quotient=tr["quotient"], tent_bound=tr["bound"])
                table.append(row)
    fk = np.array([t["fk"] for t in table])
    return {"c_min": float(fk.min()), "c_max": float(fk.max()), "ratio": float(fk.max() / fk.min()), "table": table}


def tent_function(space: FiniteSpace, center: int, R: float, r: float, ids=None) -> np.ndarray:
    """``max(0, (R - d(center, y)) / r)`` on the closed ball B_R[center]."""
    d = space.distances_from(center, ids)
    return np.where(d <= R, (R - d) / r, 0.0)


def _tent_from_kernel(K: WalkKernel, op: KilledOperator, center: int, R: float, r: float) -> dict:
    sp_ = K.space
    psi_all = tent_function(sp_, center, R, r, K.states)
    psi = psi_all[op.idx]
    q = rayleigh_quotient(op, psi)
    d = sp_.distances_from(center, K.states)
    w = K.state_weights
    big = float(w[d <= R].sum())
    half = float(w[d <= R / 2].sum())
    if half <= 0:
        raise ValueError("empty half-ball")
    bound = 4 * r**2 * big / (R**2 * half)
    return {"quotient": q, "bound": bound}


def tent_rayleigh(space: FiniteSpace, center: int, R: float, r: float, tol: float = 1e-9) -> dict:
    """Rayleigh quotient of the tent function for the killed w_r walk.

    Returns the quotient, the bound ``4 r^2 mu(B_R) / (R^2 mu(B_{R/2}))``, the
    bottom eigenvalue and whether ``lambda_1 <= quotient <= bound (1 + tol)``.
    """
    if not (0 < r < R):
        raise ValueError("need 0 < r < R")
    sub, c = local_problem(space, center, R, r)
    K = ball_kernel_w(sub, r)
    reg = ball_region(K, c, R)
    op = killed_operator(K, reg)
    out = _tent_from_kernel(K, op, c, R, r)
    lam = bottom_eigenvalue(op)["lambda1"]
    out["lambda1"] = lam
    out["lower_ok"] = bool(lam <= out["quotient"] * (1 + tol))
    out["upper_ok"] = bool(out["quotient"] <= out["bound"] * (1 + tol))
    out["ok"] = out["lower_ok"] and out["upper_ok"]
    return out


# ---------------------------------------------------------------------------
# Dirichlet energies


def dirichlet_energy(space: FiniteSpace, r: float, beta, f) -> float:
    """``sum_x mu_x / (r**beta(x) v_r(x)) sum_{y in B_r(x)} mu_y (f_x - f_y)**2``.

    ``beta=None`` drops the time factor (the w_r form).
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (space.n,) or not np.all(np.isfinite(f)):
        raise ValueError("f must be finite with one value per point")
    i, j, _ = space.pairs(r)
    mu = space.weights
    v = np.bincount(i, weights=mu[j], minlength=space.n)
    if beta is None:
        tau = np.ones(space.n)
    else:
        b = np.asarray(beta.values if isinstance(beta, ScalarField) else beta, dtype=float)
        tau = float(r) ** (np.full(space.n, float(b)) if b.ndim == 0 else b)
    inner = np.bincount(i, weights=mu[j] * (f[i] - f[j]) ** 2, minlength=space.n)
    return float((mu / (tau * v) * inner).sum())


def energy_exit_identity(space: FiniteSpace, center: int, R: float, r: float, beta) -> dict:
    """Both sides of ``E_r(phi) = sum_{x in B} phi q_r mu`` for the p_r walk."""
    sub, c = local_problem(space, center, R, r)
    b = beta
    bv = np.asarray(beta.values if isinstance(beta, ScalarField) else beta, dtype=float)
    if bv.ndim and sub is not space:
        b = bv[sub.meta["parent_ids"]]
    K = ball_kernel_p(sub, r, b)
    reg = ball_region(K, c, R)
    phi = solve_exit_times(K, reg).values
    lhs = dirichlet_energy(sub, r, b, phi)
    rhs = float((phi * K.extras["q"] * sub.weights)[reg.mask].sum())
    return {"energy": lhs, "exit_side": rhs, "rel_error": abs(lhs - rhs) / abs(rhs)}


def energy_scale_series(space: FiniteSpace, scale_grid, beta, test_functions) -> list:
    """Energy of each function across ``scale_grid`` with a stabilisation ratio.

    The ratio is max/min over the finest four scales (NaN when an energy
    vanishes).
    """
    grid = np.sort(np.asarray(scale_grid, dtype=float))[::-1]
    out = []
    for k, f in enumerate(test_functions):
        vals = np.array([dirichlet_energy(space, s, beta, f) for s in grid])
        fine = vals[-4:]
        ratio = float(fine.max() / fine.min()) if np.all(fine > 0) else float("nan")
        series = ScaleSeries(grid, np.where(vals > 0, vals, np.nan), f"energy f{k}") if np.all(vals > 0) else None
        out.append({"values": vals, "scales": grid, "stabilization_ratio": ratio, "series": series})
    return out
