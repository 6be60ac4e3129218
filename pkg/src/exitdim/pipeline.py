"""Configured end-to-end runs and bit-stable export.

A run goes measure -> alpha -> beta (graph or ``w_r`` walks) -> ``p_r`` walks
-> time regularity and Faber-Krahn tables. Every number in the bundle sits
next to the (center, R, scale, seed) values that produced it.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .exponents import (
    SweepConfig,
    check_ahlfors,
    check_time_regularity,
    default_scale_grid,
    finest_scale,
    local_alpha_field,
    local_beta_field,
)
from .kernels import KERNEL_KINDS
from .spaces import FiniteSpace, FractalSpec, ScalarField, assign_measure, build_fractal, koch_alpha_field
from .spectral import faber_krahn_constant

DEFAULT_TOLERANCES = {"exit_residual": 1e-9, "r_squared": 0.98, "fk_ratio": 5.0}


class PipelineError(RuntimeError):
    """A stage failed; ``stage`` and ``params`` say where."""

    def __init__(self, stage: str, params: dict, cause: Exception):
        self.stage = stage
        self.params = params
        super().__init__(f"stage {stage!r} failed with {params}: {cause}")


@dataclass
class RunConfig:
    """All knobs of a run.

    ``centers`` entries are point ids (int), coordinates (list) or
    ``{"t": value}`` for curve-parametrised spaces. ``scale_grid`` of ``None``
    means the default grid per (center, R).
    """

    space: dict
    centers: list
    R_grid: list
    measure: str = "uniform_cell"
    measure_Q: float | None = None
    point_cap: int = 10**6
    scale_grid: list | None = None
    alpha_radii: list | None = None
    kernel_kinds: list = field(default_factory=lambda: ["ball_w"])
    net_seeds: list = field(default_factory=lambda: [0, 1, 2])
    graph_kind: str = "proximity"
    graph_param: float = 2.0
    weighted: bool = False
    p_kernel: bool = True
    faber_krahn: bool = True
    fk_fractions: list = field(default_factory=lambda: [1 / 3, 1 / 4, 1 / 6, 1 / 8])
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    results_path: str | None = None
    series_path: str | None = None
    seed: int = 0

    def __post_init__(self):
        merged = dict(DEFAULT_TOLERANCES)
        merged.update(self.tolerances or {})
        self.tolerances = merged
        self.validate()

    def validate(self) -> None:
        try:
            FractalSpec.from_dict(self.space).validate()
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"space: {exc}") from exc
        if not self.centers:
            raise ValueError("centers: must be non-empty")
        _check_grid("R_grid", self.R_grid, decreasing=True)
        if self.scale_grid is not None:
            _check_grid("scale_grid", self.scale_grid)
            if max(self.scale_grid) >= min(self.R_grid):
                raise ValueError("scale_grid: scales must lie below every R")
        if self.alpha_radii is not None:
            _check_grid("alpha_radii", self.alpha_radii)
        if not self.kernel_kinds:
            raise ValueError("kernel_kinds: must be non-empty")
        for k in self.kernel_kinds:
            if k not in KERNEL_KINDS or k == "ball_p":
                raise ValueError(f"kernel_kinds: {k!r} is not a beta sweep kernel")
        if not self.net_seeds:
            raise ValueError("net_seeds: must be non-empty")
        if self.measure not in ("uniform_cell", "diameter_power"):
            raise ValueError(f"measure: unknown mode {self.measure!r}")
        if self.graph_kind not in ("proximity", "covering"):
            raise ValueError(f"graph_kind: unknown kind {self.graph_kind!r}")
        if self.fk_fractions:
            _check_grid("fk_fractions", self.fk_fractions)
            if max(self.fk_fractions) >= 1:
                raise ValueError("fk_fractions: must be below 1")
        for k, v in self.tolerances.items():
            if not (isinstance(v, (int, float)) and v > 0):
                raise ValueError(f"tolerances.{k}: must be positive")
        for name in ("results_path", "series_path"):
            p = getattr(self, name)
            if p is not None:
                d = os.path.dirname(os.path.abspath(p))
                if not (os.path.isdir(d) and os.access(d, os.W_OK)):
                    raise ValueError(f"{name}: directory {d} is not writable")

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def numeric_dict(self) -> dict:
        """Config without output locations, which change no number."""
        d = self.to_dict()
        d.pop("results_path", None)
        d.pop("series_path", None)
        return d

    def digest(self) -> str:
        return hashlib.sha256(dumps_json(self.numeric_dict()).encode()).hexdigest()

    def sweep(self) -> SweepConfig:
        return SweepConfig(self.kernel_kinds[0], tuple(int(s) for s in self.net_seeds), self.graph_kind, float(self.graph_param), bool(self.weighted))


def _check_grid(name: str, grid, decreasing: bool = False) -> None:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError(f"{name}: must be a non-empty list")
    if not np.all(np.isfinite(g)) or np.any(g <= 0):
        raise ValueError(f"{name}: entries must be finite and positive")
    if decreasing and np.any(np.diff(g) >= 0):
        raise ValueError(f"{name}: must be strictly decreasing")
    if not decreasing and np.unique(g).size != g.size:
        raise ValueError(f"{name}: entries must be distinct")


@dataclass
class ResultBundle:
    centers: list
    regularity: dict
    spectral: dict
    series: list
    provenance: dict

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "ResultBundle":
        return cls(d["centers"], d["regularity"], d["spectral"], d["series"], d["provenance"])


# ---------------------------------------------------------------------------
# running


def resolve_centers(space: FiniteSpace, centers) -> list[int]:
    out = []
    for c in centers:
        if isinstance(c, (int, np.integer)) and not isinstance(c, bool):
            if not 0 <= int(c) < space.n:
                raise ValueError(f"center id {c} out of range")
            out.append(int(c))
        elif isinstance(c, dict) and "t" in c:
            if "t" not in space.fields:
                raise ValueError("space has no curve parameter t")
            out.append(int(np.argmin(np.abs(space.fields["t"] - float(c["t"])))))
        else:
            out.append(space.nearest(np.atleast_1d(np.asarray(c, dtype=float))))
    return out


def build_space(config: RunConfig) -> FiniteSpace:
    spec = FractalSpec.from_dict(config.space)
    space = build_fractal(spec, point_cap=int(config.point_cap))
    if config.measure == "uniform_cell" and spec.kind not in ("euclidean_grid", "path_graph"):
        return assign_measure(space, "uniform_cell")
    if config.measure == "diameter_power":
        if config.measure_Q is not None:
            Q = ScalarField.constant(space.n, config.measure_Q, "Q")
        elif spec.kind == "koch":
            Q = ScalarField(koch_alpha_field(space).values, "Q")
        else:
            raise ValueError("measure_Q: needed for diameter_power outside Koch curves")
        return assign_measure(space, "diameter_power", Q)
    return space


def _stage(name: str, params: dict, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        raise PipelineError(name, params, exc) from exc


def _nearest_center_field(space: FiniteSpace, centers: list[int], values: np.ndarray, label: str) -> ScalarField:
    """Extend per-center values to all points by nearest center."""
    pts = space.points[centers]
    d = ((space.points[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    return ScalarField(values[np.argmin(d, axis=1)], label)


def _default_alpha_radii(space: FiniteSpace, c: int, R: float) -> np.ndarray:
    lo = 16 * finest_scale(space, c, R)
    if lo >= R:
        raise ValueError("alpha_radii: space too coarse for the default radii")
    return np.geomspace(lo, R, 8)


def run_pipeline(config: RunConfig, space: FiniteSpace | None = None, write: bool = True) -> ResultBundle:
    """Run every stage; deterministic given ``config``."""
    config.validate()
    if space is None:
        space = _stage("measure", {"space": config.space, "measure": config.measure}, build_space, config)
    centers = _stage("centers", {"centers": config.centers}, resolve_centers, space, config.centers)
    R_grid = np.asarray(config.R_grid, dtype=float)
    R0 = float(R_grid[0])
    cfg = config.sweep()

    per_center = [{"id": c, "coords": space.points[c].tolist(), "beta": {}} for c in centers]

    # alpha
    alpha_vals = np.empty(len(centers))
    for k, c in enumerate(centers):
        radii = np.asarray(config.alpha_radii, dtype=float) if config.alpha_radii is not None else _stage("alpha", {"center": c}, _default_alpha_radii, space, c, R0)
        fit = _stage("alpha", {"center": c, "radii": radii.tolist()}, local_alpha_field, space, [c], radii).fits[0]
        alpha_vals[k] = fit.slope
        per_center[k]["alpha"] = dict(fit.to_dict(), radii=radii.tolist())
    if space.meta.get("kind") == "koch":
        truth = koch_alpha_field(space).values
        for k, c in enumerate(centers):
            per_center[k]["alpha"]["reference"] = float(truth[c])

    # beta, one sweep per kernel kind
    scale_grid = None if config.scale_grid is None else np.asarray(config.scale_grid, dtype=float)
    beta_vals = None
    for kind in config.kernel_kinds:
        kcfg = SweepConfig(kind, cfg.net_seeds, cfg.graph_kind, cfg.graph_param, cfg.weighted)
        lf = _stage("beta", {"kernel_kind": kind, "R_grid": R_grid.tolist(), "scale_grid": None if scale_grid is None else scale_grid.tolist()}, local_beta_field, space, centers, R_grid, scale_grid, cfg=kcfg, r2_threshold=config.tolerances["r_squared"])
        for k, diag in enumerate(lf.fits):
            per_center[k]["beta"][kind] = dict(diag, value=lf.values[k], flagged=centers[k] in lf.flagged)
        if beta_vals is None:
            beta_vals = lf.values
    series = _series_rows(space, centers, per_center, config.kernel_kinds[0])

    regularity: dict = {}
    ok_alpha = alpha_vals > 0
    if np.all(ok_alpha):
        Q = _nearest_center_field(space, centers, alpha_vals, "Q")
        radii = np.asarray(per_center[0]["alpha"]["radii"])
        regularity["ahlfors"] = _stage("ahlfors", {"centers": centers}, check_ahlfors, space, Q, centers, radii)

    # p_r walks with the fitted beta field
    good = ~np.isnan(beta_vals)
    if config.p_kernel and good.any():
        filled = np.where(good, beta_vals, float(np.nanmean(beta_vals)))
        B = _nearest_center_field(space, centers, filled, "beta")
        grid = scale_grid if scale_grid is not None else (lambda R: _grid_for(space, centers, R))
        regularity["time"] = _stage("p_kernel", {"R_grid": R_grid.tolist()}, check_time_regularity, space, B, centers, R_grid, grid)
        regularity["time"]["beta_source"] = {"kernel_kind": config.kernel_kinds[0], "filled_centers": [centers[k] for k in np.flatnonzero(~good)]}
    elif config.p_kernel:
        regularity["time"] = {"skipped": "no center passed the beta fit gate"}

    spectral: dict = {}
    if config.faber_krahn:
        fr = np.asarray(config.fk_fractions, dtype=float)
        fk_cfg = SweepConfig("ball_w", (int(config.net_seeds[0]),), cfg.graph_kind, cfg.graph_param, cfg.weighted)
        spectral["faber_krahn"] = _stage("faber_krahn", {"R_grid": R_grid.tolist(), "fractions": fr.tolist()}, faber_krahn_constant, space, centers, R_grid, lambda R: R * fr, cfg=fk_cfg)
        tb = spectral["faber_krahn"]["table"]
        spectral["faber_krahn"]["tent_dominates"] = bool(all(r["tent_bound"] >= r["lambda1"] for r in tb if "tent_bound" in r))

    provenance = {
        "config_hash": config.digest(),
        "config": config.numeric_dict(),
        "seeds": {"global": int(config.seed), "net_seeds": [int(s) for s in config.net_seeds]},
        "code_version": __version__,
        "n_points": int(space.n),
        "centers": centers,
    }
    bundle = ResultBundle(per_center, regularity, spectral, series, provenance)
    bundle = ResultBundle.from_dict(bundle.to_dict())
    if write:
        if config.results_path:
            export(bundle, "json", config.results_path)
        if config.series_path:
            export(bundle, "csv", config.series_path)
    return bundle


def _grid_for(space: FiniteSpace, centers: list[int], R: float) -> np.ndarray:
    return default_scale_grid(R, max(finest_scale(space, c, R) for c in centers))


def _series_rows(space: FiniteSpace, centers: list[int], per_center: list, kind: str) -> list:
    """``e_plus`` per (center, scale) at the selected R, with ``mu(B_scale)``."""
    rows = []
    for k, c in enumerate(centers):
        diag = per_center[k]["beta"][kind]
        fits = [f for f in diag["fits"] if f is not None]
        if not fits:
            continue
        chosen = next((f for f in fits if f["R"] == diag.get("R")), fits[-1])
        d = space.distances_from(c)
        for row in chosen["series"]:
            if "error" in row:
                continue
            mass = float(space.weights[d < row["scale"]].sum())
            rows.append({"center": c, "R": chosen["R"], "scale": row["scale"], "e_plus": row["e_plus"], "ball_mass": mass})
    return rows


# ---------------------------------------------------------------------------
# export


def _clean(obj):
    """Plain JSON types; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _fmt_float(x: float) -> str:
    s = format(x, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def dumps_json(obj, indent: int = 0) -> str:
    """Canonical JSON: sorted keys, floats at 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps_json(obj[k], indent + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) or v is None for v in obj):
            return "[" + ", ".join(dumps_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    return dumps_json(_clean(obj), indent)


SERIES_COLUMNS = ("center", "scale", "e_plus", "ball_mass")


def export(bundle: ResultBundle, fmt: str, path) -> None:
    """``json``: the whole bundle. ``csv``: ``center,scale,e_plus,ball_mass``."""
    if fmt == "json":
        text = dumps_json(bundle.to_dict()) + "\n"
    elif fmt == "csv":
        rows = sorted(bundle.series, key=lambda r: (r["center"], -r["scale"]))
        lines = [",".join(SERIES_COLUMNS)]
        for r in rows:
            lines.append(f"{r['center']},{_fmt_float(r['scale'])},{_fmt_float(r['e_plus'])},{_fmt_float(r['ball_mass'])}")
        text = "\n".join(lines) + "\n"
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    with open(path, "w") as fh:
        fh.write(text)


def load_bundle(path) -> ResultBundle:
    with open(path) as fh:
        return ResultBundle.from_dict(json.load(fh))
