"""Acceptance checks with fixed recipes.

Each ``check_*`` function runs one recipe and returns a ``CheckResult``; the
``exitdim verify`` command and ``tests/test_acceptance.py`` both use them.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .exit import ball_region, monte_carlo_exit, region_from_mask, solve_exit_times
from .exponents import (
    SweepConfig,
    beta_ball,
    default_scale_grid,
    finest_scale,
    local_alpha_field,
)
from .graphs import covering_graph, proximity_graph
from .kernels import ball_kernel_p, ball_kernel_w, build_kernel, detailed_balance_violation, graph_kernel
from .nets import build_epsilon_net
from .spaces import FractalSpec, ScalarField, assign_measure, build_euclidean, build_fractal, build_path, koch_alpha, koch_alpha_field
from .spectral import energy_exit_identity, faber_krahn_constant, green_matrix, killed_operator, spectral_radius_killed

LOG3_2 = math.log(3) / math.log(2)
LOG5_2 = math.log(5) / math.log(2)
SQ3 = math.sqrt(3.0)
GASKET_JUNCTIONS = ((0.5, 0.0), (0.25, SQ3 / 4), (0.75, SQ3 / 4))


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    summary: str
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.name}: {self.summary} ({self.seconds:.1f} s)"


def _timed(number: int, name: str, limit: float):
    def wrap(fn):
        def run(**kw) -> CheckResult:
            t0 = time.perf_counter()
            passed, summary, details = fn(**kw)
            dt = time.perf_counter() - t0
            fast = dt < limit
            if not fast:
                summary += f"; over the {limit:.0f} s budget"
            details["runtime_limit"] = limit
            return CheckResult(number, name, bool(passed and fast), summary, dt, details)

        run.number = number
        run.check_name = name
        return run

    return wrap


def nearest_state(K, coords) -> int:
    """Kernel state (a point id) closest to ``coords``."""
    d = np.linalg.norm(K.space.points[K.states] - np.asarray(coords, dtype=float), axis=1)
    return int(K.states[np.argmin(d)])


# ---------------------------------------------------------------------------
# 1


def lazy_path_kernel(n: int):
    """Uniform walk on the path 0..n with a self-loop at every vertex."""
    space = build_path(n)
    net = build_epsilon_net(space, 1.0)
    return graph_kernel(proximity_graph(space, net, 2.0), space, "uniform")


def _dense_path_oracle(n: int) -> np.ndarray:
    # (I - P) on the interior 1..n-1 with P = 1/3 on {k-1, k, k+1}
    m = n - 1
    A = np.eye(m) * (2.0 / 3.0) - (np.eye(m, k=1) + np.eye(m, k=-1)) / 3.0
    return np.linalg.solve(A, np.ones(m))


@_timed(1, "path-graph exit times", 5.0)
def check_path_exit(ns=(10, 100, 1000)):
    errs, oracle_errs = {}, {}
    for n in ns:
        K = lazy_path_kernel(n)
        mask = np.zeros(n + 1, dtype=bool)
        mask[1:-1] = True
        phi = solve_exit_times(K, region_from_mask(K, mask, center=n // 2)).values
        k = np.arange(n + 1)
        exact = 1.5 * k * (n - k)
        errs[n] = float(np.max(np.abs(phi - exact)))
        oracle_errs[n] = float(np.max(np.abs(phi[1:-1] - _dense_path_oracle(n))))
    worst = max(errs.values())
    return worst < 1e-9, f"max |phi - 1.5 k(n-k)| = {worst:.2e}", {"errors": errs, "dense_oracle_errors": oracle_errs}


# ---------------------------------------------------------------------------
# 2


@_timed(2, "Euclidean exit profile", 30.0)
def check_euclidean_profile(h=0.002, R=1.0, r=0.05, dim=1):
    space = build_euclidean(dim, R, h)
    c = space.nearest(np.zeros(dim))
    K = ball_kernel_w(space, r)
    f = solve_exit_times(K, ball_region(K, c, R))
    x2 = (space.points**2).sum(axis=1)
    exact = (dim + 2) / dim * (R**2 - x2) / r**2
    inner = np.sqrt(x2) <= R - 3 * r + 1e-12
    rel = np.abs(f.values[inner] - exact[inner]) / exact[inner]
    worst = float(rel.max())
    at_center = float(abs(f.values[c] - exact[c]) / exact[c])
    return worst < 0.05, f"max relative error {worst:.4f} for |x| <= R-3r (center {at_center:.4f})", {"max_rel_error": worst, "center_rel_error": at_center, "residual": f.residual}


# ---------------------------------------------------------------------------
# 3


def euclidean_beta(dim: int) -> dict:
    if dim == 1:
        space = build_euclidean(1, 0.5, 0.0005)
        c = space.nearest([0.0])
        grid = default_scale_grid(0.5, finest_scale(space, c, 0.5))
        fit = beta_ball(space, c, 0.5, grid, cfg=SweepConfig("ball_w"))
    else:
        space = build_euclidean(2, 0.5, 0.002, point_cap=10**7)
        c = space.nearest([0.0, 0.0])
        grid = 0.03125 * 2.0 ** (-np.arange(6) / 2)
        fit = beta_ball(space, c, 0.5, grid, cfg=SweepConfig("graph_symmetrized", (0, 1, 2)))
    return {"slope": fit.slope, "r_squared": fit.r_squared, "scales": [float(s) for s in grid], "n_points": space.n}


@_timed(3, "beta on Euclidean spaces", 300.0)
def check_euclidean_beta():
    res = {d: euclidean_beta(d) for d in (1, 2)}
    ok = all(1.9 <= v["slope"] <= 2.1 for v in res.values())
    return ok, ", ".join(f"dim {d}: beta {v['slope']:.4f}" for d, v in res.items()), {"fits": res}


# ---------------------------------------------------------------------------
# 4


@_timed(4, "gasket walk dimension", 600.0)
def check_gasket_beta(stage=10, R=0.25):
    space = build_fractal(FractalSpec("gasket", stage, (0.5, 0.5)))
    c = space.nearest([0.5, 0.0])
    grid = 0.03125 * 2.0 ** (-np.arange(7) / 2)
    fit = beta_ball(space, c, R, grid, cfg=SweepConfig("graph_symmetrized", (0, 1, 2), "proximity", 2.0))
    ok = abs(fit.slope - LOG5_2) <= 0.15 and fit.r_squared >= 0.98
    return ok, f"beta {fit.slope:.4f} (target {LOG5_2:.5f}), r^2 {fit.r_squared:.4f}", {"slope": fit.slope, "r_squared": fit.r_squared, "dropped": fit.extras["dropped"]}


# ---------------------------------------------------------------------------
# 5


def brute_force_ball_mass(points: np.ndarray, weights: np.ndarray, center: int, r: float) -> float:
    d = np.linalg.norm(points - points[center], axis=1)
    return float(weights[d < r].sum())


@_timed(5, "gasket Hausdorff dimension", 60.0)
def check_gasket_alpha(stage=10):
    space = build_fractal(FractalSpec("gasket", stage, (0.5, 0.5)))
    centers = [space.nearest(p) for p in GASKET_JUNCTIONS]
    radii = 2.0 ** -np.arange(3, stage - 2)
    field_ = local_alpha_field(space, centers, radii)
    oracle = []
    for c in centers:
        m = np.array([brute_force_ball_mass(space.points, space.weights, c, r) for r in radii])
        oracle.append(float(-np.polyfit(np.log(1 / radii), np.log(m), 1)[0]))
    errs = np.abs(field_.values - LOG3_2)
    oracle_gap = float(np.max(np.abs(np.array(oracle) - field_.values)))
    ok = bool(np.all(errs <= 0.05)) and oracle_gap < 1e-9
    return ok, f"alpha {np.round(field_.values, 4).tolist()} (target {LOG3_2:.5f}); brute-force gap {oracle_gap:.1e}", {"alpha": field_.values.tolist(), "oracle": oracle}


# ---------------------------------------------------------------------------
# 6

KOCH_ANGLES = (math.radians(5.0), math.radians(80.0))


def koch_space(stage=10):
    space = build_fractal(FractalSpec("koch", stage, KOCH_ANGLES), point_cap=2**21)
    return assign_measure(space, "diameter_power", ScalarField(koch_alpha_field(space).values, "Q"))


def koch_exponents(space, t: float, R_grid=(0.08, 0.04), r2_threshold=0.98) -> dict:
    c = int(np.argmin(np.abs(space.fields["t"] - t)))
    true_alpha = float(koch_alpha(space.fields["t"][c], *KOCH_ANGLES))
    R_alpha = R_grid[-1]
    radii = np.geomspace(16 * finest_scale(space, c, R_alpha), R_alpha, 8)
    alpha = float(local_alpha_field(space, [c], radii).values[0])
    cfg = SweepConfig("graph_symmetrized", (0, 1, 2), "covering", 2.0)
    chosen = None
    fits = []
    for R in R_grid:
        try:
            fit = beta_ball(space, c, R, default_scale_grid(R, finest_scale(space, c, R)), cfg=cfg)
        except ValueError as exc:
            fits.append({"R": R, "error": str(exc)})
            continue
        fits.append({"R": R, "slope": fit.slope, "r_squared": fit.r_squared})
        if fit.r_squared >= r2_threshold:
            chosen = fit
    if chosen is None:
        return {"t": t, "alpha": alpha, "alpha_true": true_alpha, "beta": float("nan"), "ratio": float("nan"), "fits": fits}
    return {"t": t, "alpha": alpha, "alpha_true": true_alpha, "beta": chosen.slope, "R": chosen.extras["R"], "ratio": chosen.slope / (2 * alpha), "fits": fits}


@_timed(6, "variable Koch exponents", 900.0)
def check_koch(ts=(0.1, 0.5, 0.9), stage=10):
    space = koch_space(stage)
    rows = [koch_exponents(space, t) for t in ts]
    ok = all(abs(r["alpha"] - r["alpha_true"]) <= 0.1 and 0.9 <= r["ratio"] <= 1.1 for r in rows)
    summary = "; ".join(f"t={r['t']}: alpha {r['alpha']:.3f}/{r['alpha_true']:.3f}, beta/2alpha {r['ratio']:.3f}" for r in rows)
    return ok, summary, {"rows": rows}


# ---------------------------------------------------------------------------
# 7


def structural_identities() -> dict:
    gasket = build_fractal(FractalSpec("gasket", 6, (0.5, 0.5)))
    koch = koch_space(6)
    koch_beta = 2 * koch_alpha_field(koch).values
    line = build_euclidean(1, 1.0, 0.01)
    out = {"row_sums": 0.0, "detailed_balance": 0.0, "detailed_balance_rel": 0.0, "p_equals_w": 0.0, "green_symmetry": 0.0, "exit_green": 0.0, "spectral_radius_max": 0.0, "spectral_radius_certified_max": 0.0, "energy_exit": 0.0}

    kernels = []
    net = build_epsilon_net(gasket, 0.05, seed=0)
    for mode in ("uniform", "symmetrized"):
        kernels.append(graph_kernel(proximity_graph(gasket, net, 2.0), gasket, mode))
        kernels.append(graph_kernel(covering_graph(gasket, net, 1.0), gasket, mode))
    kernels += [ball_kernel_w(gasket, 0.08), ball_kernel_p(gasket, 0.08, LOG5_2), ball_kernel_w(koch, 0.05), ball_kernel_p(koch, 0.05, koch_beta), ball_kernel_w(line, 0.05), ball_kernel_p(line, 0.05, 2.0)]
    for K in kernels:
        out["row_sums"] = max(out["row_sums"], float(np.max(np.abs(K.row_sums() - 1))))
        if K.kind == "ball_p":
            out["detailed_balance"] = max(out["detailed_balance"], detailed_balance_violation(K))
            out["detailed_balance_rel"] = max(out["detailed_balance_rel"], detailed_balance_violation(K, relative=True))

    for sp_, r, b in ((gasket, 0.08, LOG5_2), (line, 0.05, 2.0), (koch, 0.05, 1.7)):
        W, Pk = ball_kernel_w(sp_, r), ball_kernel_p(sp_, r, b)
        out["p_equals_w"] = max(out["p_equals_w"], float(abs(W.P - Pk.P).max()))

    cases = [
        (kernels[4], gasket.nearest([0.5, 0.0]), 0.3),
        (kernels[1], nearest_state(kernels[1], [0.25, 0.2]), 0.25),
        (kernels[5], gasket.nearest([0.5, 0.3]), 0.3),
        (kernels[7], int(np.argmin(np.abs(koch.fields["t"] - 0.5))), 0.2),
        (kernels[9], line.nearest([0.0]), 0.5),
    ]
    for K, c, R in cases:
        reg = ball_region(K, c, R)
        op = killed_operator(K, reg)
        rad = spectral_radius_killed(op)
        out["spectral_radius_max"] = max(out["spectral_radius_max"], rad["rho"])
        out["spectral_radius_certified_max"] = max(out["spectral_radius_certified_max"], rad["upper_bound"])
        G = green_matrix(op)
        phi = solve_exit_times(K, reg).values[reg.mask]
        out["green_symmetry"] = max(out["green_symmetry"], G.symmetry_violation())
        out["exit_green"] = max(out["exit_green"], float(np.max(np.abs(G.exit_times() - phi)) / np.max(phi)))

    for sp_, c, R, r, b in ((gasket, gasket.nearest([0.5, 0.0]), 0.3, 0.08, LOG5_2), (koch, int(np.argmin(np.abs(koch.fields["t"] - 0.5))), 0.2, 0.05, koch_beta), (line, line.nearest([0.0]), 0.5, 0.05, 2.0)):
        out["energy_exit"] = max(out["energy_exit"], energy_exit_identity(sp_, c, R, r, b)["rel_error"])
    return out


@_timed(7, "exact structural identities", 120.0)
def check_identities():
    v = structural_identities()
    limits = {"row_sums": 1e-12, "detailed_balance": 1e-12, "p_equals_w": 1e-12, "green_symmetry": 1e-8, "exit_green": 1e-8, "energy_exit": 1e-8}
    ok = all(v[k] < lim for k, lim in limits.items()) and v["spectral_radius_certified_max"] < 1 - 1e-6
    bad = [k for k, lim in limits.items() if not v[k] < lim]
    summary = "all identities hold" if ok else f"failed: {bad or ['spectral_radius']}"
    summary += f" (worst row sum {v['row_sums']:.1e}, Green symmetry {v['green_symmetry']:.1e}, rho <= {v['spectral_radius_certified_max']:.6f})"
    return ok, summary, v


# ---------------------------------------------------------------------------
# 8


def faber_krahn_sweep() -> dict:
    fr = np.array([1 / 3, 1 / 4, 1 / 6, 1 / 8])
    gasket = build_fractal(FractalSpec("gasket", 8, (0.5, 0.5)))
    gc = [gasket.nearest(p) for p in ((0.5, 0.0), (0.25, 0.2), (0.5, 0.6))]
    g = faber_krahn_constant(gasket, gc, [0.25, 0.125], lambda R: R * fr)
    line = build_euclidean(1, 1.0, 0.002)
    lc = [line.nearest([0.0]), line.nearest([0.3])]
    e = faber_krahn_constant(line, lc, [0.5, 0.25], lambda R: R * fr)
    table = g["table"] + e["table"]
    fk = np.array([t["fk"] for t in table])
    tent = all(t["tent_bound"] >= t["lambda1"] for t in table)
    return {"n_triples": len(table), "c_min": float(fk.min()), "c_max": float(fk.max()), "ratio": float(fk.max() / fk.min()), "tent_dominates": bool(tent), "gasket_ratio": g["ratio"], "euclidean_ratio": e["ratio"]}


@_timed(8, "Faber-Krahn stability", 600.0)
def check_faber_krahn():
    v = faber_krahn_sweep()
    ok = v["n_triples"] >= 20 and v["c_min"] > 0 and v["ratio"] < 5 and v["tent_dominates"]
    return ok, f"{v['n_triples']} triples, lambda1*E+ in [{v['c_min']:.3f}, {v['c_max']:.3f}], ratio {v['ratio']:.3f}, tent bound dominates: {v['tent_dominates']}", v


# ---------------------------------------------------------------------------
# 9


def mc_battery() -> list:
    """Ten (kernel, center, radius) cases of different kinds."""
    g6 = build_fractal(FractalSpec("gasket", 6, (0.5, 0.5)))
    koch = koch_space(6)
    line = build_euclidean(1, 0.5, 0.01)
    plane = build_euclidean(2, 0.3, 0.02)
    carpet = build_fractal(FractalSpec("carpet", 3, (1 / 3, 1 / 3)))
    vicsek = build_fractal(FractalSpec("vicsek", 4, (1 / 3, 1 / 3)))
    net = build_epsilon_net(g6, 0.06, seed=1)
    vnet = build_epsilon_net(vicsek, 0.04, seed=2)
    gsym = graph_kernel(proximity_graph(g6, net, 2.0), g6, "symmetrized")
    vsym = graph_kernel(covering_graph(vicsek, vnet, 1.0), vicsek, "symmetrized")
    cases = [
        ("path n=10", lazy_path_kernel(10), 5, 4.0),
        ("path n=30", lazy_path_kernel(30), 7, 10.0),
        ("gasket ball_w", ball_kernel_w(g6, 0.1), g6.nearest([0.5, 0.0]), 0.3),
        ("gasket graph_symmetrized", gsym, nearest_state(gsym, [0.5, 0.3]), 0.3),
        ("gasket graph_uniform", graph_kernel(covering_graph(g6, net, 1.0), g6, "uniform"), int(net.members[0]), 0.35),
        ("line ball_w", ball_kernel_w(line, 0.1), line.nearest([0.0]), 0.5),
        ("plane ball_w", ball_kernel_w(plane, 0.1), plane.nearest([0.0, 0.0]), 0.3),
        ("koch ball_p", ball_kernel_p(koch, 0.05, 2 * koch_alpha_field(koch).values), int(np.argmin(np.abs(koch.fields["t"] - 0.5))), 0.2),
        ("carpet ball_w", ball_kernel_w(carpet, 0.1), carpet.nearest([0.5, 0.1]), 0.3),
        ("vicsek graph_symmetrized", vsym, nearest_state(vsym, [0.5, 0.5]), 0.3),
    ]
    return cases


def run_mc_battery(n_paths: int = 10_000, seed: int = 2024) -> list:
    rows = []
    for k, (name, K, c, R) in enumerate(mc_battery()):
        reg = ball_region(K, c, R, closed=K.space.metric != "graph_distance")
        phi = solve_exit_times(K, reg).values[K.state_index(c)]
        mc = monte_carlo_exit(K, reg, c, n_paths, seed=seed + k)
        z = abs(mc["mean"] - phi) / mc["stderr"] if mc["stderr"] > 0 else (0.0 if mc["mean"] == phi else math.inf)
        rows.append({"case": name, "phi": float(phi), "mc_mean": mc["mean"], "stderr": mc["stderr"], "z": float(z)})
    return rows


@_timed(9, "Monte Carlo consistency", 120.0)
def check_monte_carlo(n_paths=10_000, seed=2024):
    first = run_mc_battery(n_paths, seed)
    again = run_mc_battery(n_paths, seed)
    deterministic = all(a["mc_mean"] == b["mc_mean"] and a["stderr"] == b["stderr"] for a, b in zip(first, again))
    worst = max(r["z"] for r in first)
    ok = worst <= 4 and deterministic and len(first) == 10
    return ok, f"10 cases, worst |mean - phi| = {worst:.2f} stderr, deterministic: {deterministic}", {"rows": first}


CHECKS = [check_path_exit, check_euclidean_profile, check_euclidean_beta, check_gasket_beta, check_gasket_alpha, check_koch, check_identities, check_faber_krahn, check_monte_carlo]


def run_checks(numbers=None, echo=print) -> list[CheckResult]:
    out = []
    for chk in CHECKS:
        if numbers and chk.number not in numbers:
            continue
        res = chk()
        if echo:
            echo(res.line())
        out.append(res)
    return out
