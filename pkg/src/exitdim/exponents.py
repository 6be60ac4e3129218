"""Scaling exponents from log-log fits.

The walk exponent of a ball is read off the growth of the maximal mean exit
time E+ as the discretisation scale shrinks; the local dimension is read off
the growth of ball masses. Both are ordinary least-squares slopes of
``log value`` against ``log(1/scale)`` over a finite window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import map_blocks
from .exit import ball_region, solve_exit_times
from .kernels import build_kernel
from .nets import NetIndex, build_epsilon_net
from .spaces import FiniteSpace, ScalarField

R2_THRESHOLD = 0.98
GRID_RATIO = 2 ** -0.5


@dataclass(frozen=True)
class ScaleSeries:
    """Pairs (scale, value) with strictly decreasing positive scales."""

    scales: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        s = np.asarray(self.scales, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "scales", s)
        object.__setattr__(self, "values", v)
        if s.shape != v.shape or s.ndim != 1:
            raise ValueError("scales and values must be 1-D and the same length")
        if np.any(s <= 0) or np.any(np.diff(s) >= 0):
            raise ValueError("scales must be positive and strictly decreasing")

    def __len__(self):
        return self.scales.size

    def window(self, lo: float | None = None, hi: float | None = None) -> "ScaleSeries":
        keep = np.ones(len(self), dtype=bool)
        if lo is not None:
            keep &= self.scales >= lo * (1 - 1e-12)
        if hi is not None:
            keep &= self.scales <= hi * (1 + 1e-12)
        return ScaleSeries(self.scales[keep], self.values[keep], self.label)

    def to_csv(self) -> str:
        lines = ["scale,value"] + [f"{s:.17g},{v:.17g}" for s, v in zip(self.scales, self.values)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, label: str = "") -> "ScaleSeries":
        rows = [ln.split(",") for ln in text.strip().splitlines()[1:]]
        return cls(np.array([float(a) for a, _ in rows]), np.array([float(b) for _, b in rows]), label)


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple
    n_points: int
    slope_stderr: float = float("nan")
    coarse_slope: float = float("nan")
    fine_slope: float = float("nan")
    extras: dict = field(default_factory=dict)

    @property
    def drift(self) -> float:
        """Fine-half minus coarse-half slope."""
        return self.fine_slope - self.coarse_slope

    def to_dict(self) -> dict:
        d = {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "window": list(self.window),
            "n_points": self.n_points,
            "slope_stderr": self.slope_stderr,
            "coarse_slope": self.coarse_slope,
            "fine_slope": self.fine_slope,
        }
        d.update(self.extras)
        return d


def _ols(x: np.ndarray, y: np.ndarray):
    xm, ym = x.mean(), y.mean()
    sxx = ((x - xm) ** 2).sum()
    sxy = ((x - xm) * (y - ym)).sum()
    slope = sxy / sxx
    intercept = ym - slope * xm
    res = y - (intercept + slope * x)
    ss_res = float((res**2).sum())
    ss_tot = float(((y - ym) ** 2).sum())
    # noise-free data (including a constant series) fits perfectly
    scale = max(1.0, float(np.abs(y).max())) ** 2 * y.size
    if ss_tot <= 1e-28 * scale:
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    se = math.sqrt(ss_res / (x.size - 2) / sxx) if x.size > 2 else float("nan")
    return float(slope), float(intercept), r2, se


def fit_loglog_slope(series: ScaleSeries, window: tuple | None = None) -> ExponentFit:
    """OLS of ``log value`` on ``log(1/scale)`` over scales in ``window``."""
    s = series if window is None else series.window(*window)
    if len(s) < 3:
        raise ValueError(f"need at least 3 points in the fit window, got {len(s)}")
    if np.any(s.values <= 0) or not np.all(np.isfinite(s.values)):
        raise ValueError("values must be finite and positive")
    x = -np.log(s.scales)
    y = np.log(s.values)
    slope, intercept, r2, se = _ols(x, y)
    h = (len(s) + 1) // 2
    coarse = _ols(x[:h], y[:h])[0] if h >= 2 else float("nan")
    fine = _ols(x[-h:], y[-h:])[0] if h >= 2 else float("nan")
    return ExponentFit(slope, intercept, r2, (float(s.scales.min()), float(s.scales.max())), len(s), se, coarse, fine)


def default_scale_grid(R: float, finest: float, n_max: int = 12, ratio: float = GRID_RATIO, top_fraction: float = 0.125, bottom_factor: float = 4.0) -> np.ndarray:
    """Geometric grid from ``top_fraction * R`` down to ``bottom_factor * finest``."""
    top = top_fraction * R
    bottom = bottom_factor * finest
    if top <= bottom:
        raise ValueError("space too coarse for a scale grid at this radius")
    k = int(math.floor(math.log(bottom / top) / math.log(ratio) + 1e-9)) + 1
    k = min(k, n_max)
    grid = top * ratio ** np.arange(k)
    if grid.size < 3:
        raise ValueError("scale grid has fewer than 3 points")
    return grid


def finest_scale(space: FiniteSpace, center: int | None = None, R: float | None = None) -> float:
    """Largest cell diameter, over the whole space or within ``B_R[center]``."""
    if space.diameters is None:
        return 1.0
    if center is None:
        return float(np.max(space.diameters))
    if R is None:
        raise ValueError("a local finest scale needs R")
    return float(np.max(space.diameters[space.ball(center, R, closed=True)]))


# ---------------------------------------------------------------------------
# exit-time series


@dataclass(frozen=True)
class SweepConfig:
    """Knobs shared by the exit-time sweeps."""

    kernel_kind: str = "ball_w"
    net_seeds: tuple = (0, 1, 2)
    graph_kind: str = "proximity"
    graph_param: float = 2.0
    weighted: bool = False
    closed: bool = True


def jump_radius(kind: str, scale: float, cfg: SweepConfig) -> float:
    if kind.startswith("graph"):
        return cfg.graph_param * scale if cfg.graph_kind == "proximity" else 2 * cfg.graph_param * scale
    return scale


def local_problem(space: FiniteSpace, center: int, R: float, J: float):
    """Crop to B_{R+3J}[center]; exact for exits from B_R with jumps < J.

    Returns the cropped space and the index of ``center`` inside it.
    """
    if space.metric != "euclidean":
        return space, int(center)
    ids = space.ball(center, R + 3 * J, closed=True)
    sub = space.restrict(ids)
    return sub, int(np.searchsorted(ids, center))


def exit_max_at_scale(space: FiniteSpace, center: int, R: float, scale: float, cfg: SweepConfig = SweepConfig(), beta=None) -> dict:
    """E+ of B_R[center] at one scale (max over seeded nets for graph kinds)."""
    kind = cfg.kernel_kind
    J = jump_radius(kind, scale, cfg)
    sub, c = local_problem(space, center, R, J)
    b = None
    if beta is not None:
        bv = np.asarray(beta.values if isinstance(beta, ScalarField) else beta, dtype=float)
        if bv.ndim == 0:
            b = float(bv)
        else:
            b = bv[sub.meta["parent_ids"]] if "parent_ids" in sub.meta and sub is not space else bv
    runs = []
    seeds = cfg.net_seeds if kind.startswith("graph") else (None,)
    for seed in seeds:
        net = None
        if kind.startswith("graph"):
            start = NetIndex(scale, np.array([c]))
            net = build_epsilon_net(sub, scale, seed=seed, extend_from=start)
        K = build_kernel(sub, kind, scale, beta=b, net=net, graph_kind=cfg.graph_kind, graph_param=cfg.graph_param, weighted=cfg.weighted)
        reg = ball_region(K, c, R, closed=cfg.closed)
        f = solve_exit_times(K, reg)
        runs.append({"seed": seed, "e_plus": f.max(), "n_states": int(reg.size), "residual": f.residual})
    best = max(runs, key=lambda d: d["e_plus"])
    return {"scale": float(scale), "e_plus": best["e_plus"], "runs": runs, "n_states": best["n_states"]}


def beta_ball_series(space: FiniteSpace, center: int, R: float, scale_grid, cfg: SweepConfig = SweepConfig(), beta=None) -> tuple[ScaleSeries, list]:
    """E+ of B_R[center] across ``scale_grid``.

    Scales where the approximation breaks (isolated states, unreachable
    complement) are dropped and reported.
    """
    grid = np.sort(np.asarray(scale_grid, dtype=float))[::-1]
    if np.any(grid >= R):
        raise ValueError("scales must be below R")

    def one(s):
        try:
            return exit_max_at_scale(space, center, R, s, cfg, beta)
        except (ValueError, RuntimeError) as exc:
            return {"scale": float(s), "error": str(exc)}

    rows = map_blocks(one, grid)
    good = [r for r in rows if "error" not in r]
    series = ScaleSeries(np.array([r["scale"] for r in good]), np.array([r["e_plus"] for r in good]), f"E+ center={center} R={R}")
    return series, rows


def beta_ball(space: FiniteSpace, center: int, R: float, scale_grid=None, kernel_kind: str = "ball_w", net_seeds=(0, 1, 2), cfg: SweepConfig | None = None) -> ExponentFit:
    """Slope of log E+(B_R[center]) against log(1/scale)."""
    if cfg is None:
        cfg = SweepConfig(kernel_kind=kernel_kind, net_seeds=tuple(net_seeds))
    if scale_grid is None:
        scale_grid = default_scale_grid(R, finest_scale(space, center, R))
    series, rows = beta_ball_series(space, center, R, scale_grid, cfg)
    dropped = [r for r in rows if "error" in r]
    fit = fit_loglog_slope(series)
    extras = {"center": int(center), "R": float(R), "kernel_kind": cfg.kernel_kind, "series": rows, "dropped": [r["scale"] for r in dropped]}
    return _with_extras(fit, extras)


def _with_extras(fit: ExponentFit, extras: dict) -> ExponentFit:
    e = dict(fit.extras)
    e.update(extras)
    return ExponentFit(fit.slope, fit.intercept, fit.r_squared, fit.window, fit.n_points, fit.slope_stderr, fit.coarse_slope, fit.fine_slope, e)


@dataclass(frozen=True)
class LocalField:
    """Per-center exponent estimates; ``values`` is NaN at flagged centers."""

    centers: np.ndarray
    values: np.ndarray
    fits: list
    flagged: list
    label: str

    def as_field(self) -> ScalarField:
        if self.flagged:
            raise ValueError(f"centers without an admissible fit: {self.flagged}")
        return ScalarField(self.values, self.label)


def local_beta_field(space: FiniteSpace, centers, R_grid, scale_grid=None, kernel_kind: str = "ball_w", net_seeds=(0, 1, 2), r2_threshold: float = R2_THRESHOLD, cfg: SweepConfig | None = None) -> LocalField:
    """beta(x) from the smallest R whose fit passes the r^2 gate.

    ``scale_grid`` may be an array (shared by every R) or a callable
    ``R -> grid``; by default each R gets ``default_scale_grid``.
    """
    if cfg is None:
        cfg = SweepConfig(kernel_kind=kernel_kind, net_seeds=tuple(net_seeds))
    R_grid = np.asarray(R_grid, dtype=float)
    if np.any(np.diff(R_grid) >= 0):
        raise ValueError("R_grid must be strictly decreasing")
    centers = np.asarray(centers, dtype=np.intp)
    values = np.full(centers.size, np.nan)
    fits, flagged = [], []
    for k, c in enumerate(centers):
        per_R = []
        for R in R_grid:
            try:
                grid = scale_grid(R) if callable(scale_grid) else (default_scale_grid(R, finest_scale(space, int(c), R)) if scale_grid is None else scale_grid)
                per_R.append(beta_ball(space, int(c), float(R), grid, cfg=cfg))
            except ValueError:
                per_R.append(None)
        ok = [f for f in per_R if f is not None and f.r_squared >= r2_threshold]
        slopes = [f.slope if f is not None else float("nan") for f in per_R]
        mono = all(a >= b - 2 * max(fa.slope_stderr, fb.slope_stderr, 0.0) for a, b, fa, fb in _pairs(per_R)) if len(ok) > 1 else True
        diag = {"center": int(c), "R_grid": R_grid.tolist(), "slopes": slopes, "monotone": bool(mono), "fits": [f.to_dict() if f else None for f in per_R]}
        if ok:
            best = ok[-1]
            values[k] = best.slope
            diag["R"] = best.extras["R"]
        else:
            flagged.append(int(c))
        fits.append(diag)
    return LocalField(centers, values, fits, flagged, "beta")


def _pairs(fits):
    valid = [f for f in fits if f is not None]
    for fa, fb in zip(valid[:-1], valid[1:]):
        yield fa.slope, fb.slope, fa, fb


# ---------------------------------------------------------------------------
# dimensions and regularity


def mass_series(space: FiniteSpace, center: int, r_grid, closed: bool = False) -> ScaleSeries:
    r = np.sort(np.asarray(r_grid, dtype=float))[::-1]
    w = space.weights
    if space.metric == "euclidean":
        d = space.distances_from(center)
        m = np.array([w[(d <= x) if closed else (d < x)].sum() for x in r])
    else:
        m = np.array([w[space.ball(center, x, closed)].sum() for x in r])
    return ScaleSeries(r, m, f"mass center={center}")


def local_alpha_field(space: FiniteSpace, centers, r_grid, closed: bool = False) -> LocalField:
    """Slope of log mu(B_r(x)) against log r for each center."""
    centers = np.asarray(centers, dtype=np.intp)
    fits = []
    vals = np.empty(centers.size)
    for k, c in enumerate(centers):
        f = fit_loglog_slope(mass_series(space, int(c), r_grid, closed))
        # mass grows with r, so the slope against log(1/r) is -alpha
        f = ExponentFit(-f.slope, f.intercept, f.r_squared, f.window, f.n_points, f.slope_stderr, -f.coarse_slope, -f.fine_slope, {"center": int(c)})
        vals[k] = f.slope
        fits.append(f)
    return LocalField(centers, vals, fits, [], "alpha")


def check_ahlfors(space: FiniteSpace, Q, centers, radii, closed: bool = False) -> dict:
    """Two-sided constant of mu(B_r(x)) against r**Q(x) over the samples."""
    q = np.asarray(Q.values if isinstance(Q, ScalarField) else Q, dtype=float)
    if q.ndim == 0:
        q = np.full(space.n, float(q))
    if np.any(q <= 0):
        raise ValueError("Q must be positive")
    centers = np.asarray(centers, dtype=np.intp)
    radii = np.asarray(radii, dtype=float)
    if centers.size == 0 or radii.size == 0:
        raise ValueError("empty sample")
    best, worst = 0.0, None
    for c in centers:
        ser = mass_series(space, int(c), radii, closed)
        for r, m in zip(ser.scales, ser.values):
            ratio = m / r ** q[c]
            val = max(ratio, 1 / ratio)
            if val > best:
                best, worst = float(val), (int(c), float(r))
    return {"C_est": best, "worst_pair": worst}


def check_time_regularity(space: FiniteSpace, beta, centers, R_grid, scale_grid=None, scale_fraction: float | None = None) -> dict:
    """Compare phi+ of the p_r walk on B_R[x] with R**beta(x).

    The surrogate for T(B_R[x]) is phi+ at the finest scale of the grid
    (``scale_grid`` array, callable ``R -> grid`` or ``scale_fraction * R``).
    """
    b = np.asarray(beta.values if isinstance(beta, ScalarField) else beta, dtype=float)
    if b.ndim == 0:
        b = np.full(space.n, float(b))
    cfg = SweepConfig(kernel_kind="ball_p")
    table = []
    for c in np.asarray(centers, dtype=np.intp):
        for R in np.asarray(R_grid, dtype=float):
            if scale_fraction is not None:
                s = scale_fraction * R
            else:
                grid = scale_grid(R) if callable(scale_grid) else (default_scale_grid(R, finest_scale(space, int(c), R)) if scale_grid is None else np.asarray(scale_grid))
                s = float(np.min(grid))
            T = exit_max_at_scale(space, int(c), float(R), s, cfg, beta=b)["e_plus"]
            table.append({"center": int(c), "R": float(R), "scale": s, "T": T, "ratio": T / R ** b[c]})
    ratios = np.array([t["ratio"] for t in table])
    return {"C_est": float(np.max(np.maximum(ratios, 1 / ratios))), "ratio_spread": float(ratios.max() / ratios.min()), "table": table}


def log_holder_constant(field, space: FiniteSpace, pairs=None, n_pairs: int = 20000, seed: int = 0, max_distance: float = 0.5) -> float:
    """max |f(x) - f(y)| * (-log d(x, y)) over pairs with 0 < d < 1/2."""
    f = np.asarray(field.values if isinstance(field, ScalarField) else field, dtype=float)
    if pairs is None:
        rng = np.random.default_rng(seed)
        a = rng.integers(0, space.n, n_pairs)
        # half the sample from near neighbours so small distances are seen
        near = space.tree.query(space.points[a[: n_pairs // 2]], k=min(8, space.n))[1] if space.metric == "euclidean" else None
        b = rng.integers(0, space.n, n_pairs)
        if near is not None:
            pick = rng.integers(1, near.shape[1], near.shape[0]) if near.shape[1] > 1 else np.zeros(near.shape[0], dtype=int)
            b[: n_pairs // 2] = near[np.arange(near.shape[0]), pick]
    else:
        pr = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
        a, b = pr[:, 0], pr[:, 1]
    if space.metric == "euclidean":
        d = np.sqrt(((space.points[a] - space.points[b]) ** 2).sum(axis=1))
    else:
        d = np.array([space.distances_from(int(x), [int(y)])[0] for x, y in zip(a, b)])
    ok = (d > 0) & (d < max_distance)
    if not ok.any():
        raise ValueError("no valid pairs")
    return float(np.max(np.abs(f[a[ok]] - f[b[ok]]) * -np.log(d[ok])))
