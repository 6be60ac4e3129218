"""Finite metric measure spaces.

A :class:`FiniteSpace` is a weighted point cloud with a metric oracle. The
generators here produce stage-n approximations of the variable-dimension
fractals (Koch curve, Sierpinski gasket, Sierpinski carpet, Vicsek tree),
Euclidean grids and the path graph.

Fractal cells are represented by one point (segment midpoint for Koch, cell
centre otherwise) together with the cell diameter.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

METRICS = ("euclidean", "graph_distance")
KINDS = ("koch", "gasket", "carpet", "vicsek", "euclidean_grid", "path_graph")
FIELD_LABELS = ("alpha", "beta", "Q", "other")
DEFAULT_POINT_CAP = 10**6

# slack used when asking the KD-tree for candidates; exact filtering follows
_QUERY_SLACK = 1e-9


@dataclass(frozen=True)
class FractalSpec:
    """Generator description.

    ``params`` is ``(theta1, theta2)`` (radians) for koch, ``(r1, r2)`` for
    gasket/carpet/vicsek, ``(dim, R, h)`` for euclidean_grid and ``(n,)`` for
    path_graph.
    """

    kind: str
    stage: int = 0
    params: tuple = ()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if int(self.stage) != self.stage or self.stage < 0:
            raise ValueError("stage must be a nonnegative integer")
        p = tuple(float(x) for x in self.params)
        if self.kind == "koch":
            if len(p) != 2:
                raise ValueError("koch needs (theta1, theta2)")
            t1, t2 = p
            if not (0 < t1 <= t2 < math.pi / 2):
                raise ValueError("koch requires 0 < theta1 <= theta2 < pi/2")
        elif self.kind in ("gasket", "carpet", "vicsek"):
            if len(p) != 2:
                raise ValueError(f"{self.kind} needs (r1, r2)")
            r1, r2 = p
            upper = 0.5 if self.kind == "gasket" else 1.0
            if r1 == r2:
                ok = 0 < r1 <= upper if self.kind == "gasket" else 0 < r1 < upper
            else:
                ok = 0 <= r1 < r2 <= upper
            if not ok:
                raise ValueError(f"ratio range ({r1}, {r2}) invalid for {self.kind}")
        elif self.kind == "euclidean_grid":
            if len(p) != 3:
                raise ValueError("euclidean_grid needs (dim, R, h)")
        elif self.kind == "path_graph":
            if len(p) != 1:
                raise ValueError("path_graph needs (n,)")

    def expected_count(self) -> int | None:
        base = {"koch": 4, "gasket": 3, "carpet": 8, "vicsek": 5}.get(self.kind)
        return None if base is None else base**self.stage

    def to_dict(self) -> dict:
        return {"kind": self.kind, "stage": int(self.stage), "params": [float(x) for x in self.params]}

    @classmethod
    def from_dict(cls, d: dict) -> "FractalSpec":
        params = d.get("params", ())
        if isinstance(params, dict):
            order = {
                "koch": ("theta1", "theta2"),
                "gasket": ("r1", "r2"),
                "carpet": ("r1", "r2"),
                "vicsek": ("r1", "r2"),
                "euclidean_grid": ("dim", "R", "h"),
                "path_graph": ("n",),
            }[d["kind"]]
            params = [params[k] for k in order]
        if d.get("degrees") and d["kind"] == "koch":
            params = [math.radians(x) for x in params]
        return cls(kind=d["kind"], stage=int(d.get("stage", 0)), params=tuple(params))


@dataclass(frozen=True)
class ScalarField:
    """Per-point real values, labelled ``alpha``, ``beta``, ``Q`` or ``other``."""

    values: np.ndarray
    label: str = "other"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if self.label not in FIELD_LABELS:
            raise ValueError(f"unknown field label {self.label!r}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if self.label in ("alpha", "beta", "Q") and np.any(v <= 0):
            raise ValueError(f"{self.label} field must be positive")

    @classmethod
    def constant(cls, n: int, value: float, label: str = "other") -> "ScalarField":
        return cls(np.full(n, float(value)), label)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class FiniteSpace:
    """Weighted point cloud with a metric.

    ``points`` has shape ``(n, dim)``. For ``metric == "graph_distance"`` the
    distance is the hop distance of ``adjacency``; coordinates are only used
    for export. ``fields`` holds per-point generator data (e.g. the curve
    parameter ``t`` of Koch segments).
    """

    points: np.ndarray
    weights: np.ndarray
    metric: str = "euclidean"
    diameters: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    adjacency: sp.csr_matrix | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if self.diameters is not None:
            object.__setattr__(self, "diameters", np.asarray(self.diameters, dtype=float))
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if w.shape != (pts.shape[0],):
            raise ValueError("one weight per point required")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and positive")
        if self.metric == "graph_distance" and self.adjacency is None:
            raise ValueError("graph_distance metric needs an adjacency matrix")
        for a in (pts, w, self.diameters):
            if a is not None:
                a.setflags(write=False)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self):
        return self.n

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    # -- metric oracle -------------------------------------------------

    def distances_from(self, i: int, ids=None) -> np.ndarray:
        """Distances from point ``i`` to ``ids`` (default: every point)."""
        if self.metric == "euclidean":
            other = self.points if ids is None else self.points[np.asarray(ids)]
            return np.sqrt(((other - self.points[i]) ** 2).sum(axis=1))
        d = dijkstra(self.adjacency, indices=int(i), unweighted=True)
        return d if ids is None else d[np.asarray(ids)]

    def distance_matrix(self, ids=None) -> np.ndarray:
        """Dense distance matrix among ``ids``; meant for small sets."""
        ids = np.arange(self.n) if ids is None else np.asarray(ids)
        if self.metric == "euclidean":
            p = self.points[ids]
            diff = p[:, None, :] - p[None, :, :]
            return np.sqrt((diff**2).sum(axis=2))
        d = dijkstra(self.adjacency, indices=ids, unweighted=True)
        return d[:, ids]

    def ball(self, i: int, r: float, closed: bool = False) -> np.ndarray:
        """Sorted ids of points in B_r(i) (open) or B_r[i] (closed)."""
        if self.metric == "euclidean":
            cand = np.asarray(self.tree.query_ball_point(self.points[i], r * (1 + _QUERY_SLACK) + _QUERY_SLACK), dtype=np.intp)
            d = self.distances_from(i, cand)
        else:
            d_all = dijkstra(self.adjacency, indices=int(i), unweighted=True, limit=r)
            cand = np.flatnonzero(np.isfinite(d_all))
            d = d_all[cand]
        keep = d <= r if closed else d < r
        return np.sort(cand[keep])

    def pairs(self, r: float, closed: bool = False, rows=None, cols=None):
        """All pairs ``(i, j, d)`` with ``d(i, j) < r`` (``<=`` if closed).

        ``i`` ranges over ``rows`` and ``j`` over ``cols`` (default: all
        points). Self pairs are included. Rows come out grouped and sorted.
        """
        rows = np.arange(self.n) if rows is None else np.asarray(rows, dtype=np.intp)
        cols_arr = None if cols is None else np.asarray(cols, dtype=np.intp)
        if self.metric == "euclidean":
            if cols_arr is None:
                tree, col_ids = self.tree, None
            else:
                tree, col_ids = cKDTree(self.points[cols_arr]), cols_arr
            lists = tree.query_ball_point(self.points[rows], r * (1 + _QUERY_SLACK) + _QUERY_SLACK)
            counts = np.fromiter((len(x) for x in lists), dtype=np.intp, count=len(lists))
            j = np.fromiter((k for x in lists for k in x), dtype=np.intp, count=int(counts.sum()))
            if col_ids is not None:
                j = col_ids[j]
            i = np.repeat(rows, counts)
            d = np.sqrt(((self.points[j] - self.points[i]) ** 2).sum(axis=1))
        else:
            dm = dijkstra(self.adjacency, indices=rows, unweighted=True, limit=r)
            if cols_arr is not None:
                dm = dm[:, cols_arr]
            ii, jj = np.nonzero(np.isfinite(dm))
            d = dm[ii, jj]
            i = rows[ii]
            j = jj if cols_arr is None else cols_arr[jj]
        keep = d <= r if closed else d < r
        i, j, d = i[keep], j[keep], d[keep]
        order = np.lexsort((j, i))
        return i[order], j[order], d[order]

    def ball_mass(self, r: float, closed: bool = False, rows=None) -> np.ndarray:
        """mu(B_r(x)) for x in ``rows`` (default: all points)."""
        rows = np.arange(self.n) if rows is None else np.asarray(rows, dtype=np.intp)
        i, j, _ = self.pairs(r, closed=closed, rows=rows)
        pos = np.searchsorted(rows, i) if np.all(np.diff(rows) > 0) else _positions(rows, i)
        return np.bincount(pos, weights=self.weights[j], minlength=rows.size)

    def diameter(self) -> float:
        if self.n <= 1:
            return 0.0
        if self.metric == "graph_distance":
            return float(np.max(dijkstra(self.adjacency, unweighted=True)))
        pts = self.points
        if self.dim == 1:
            return float(pts.max() - pts.min())
        if self.n > 2000:
            from scipy.spatial import ConvexHull

            try:
                pts = pts[ConvexHull(pts).vertices]
            except Exception:  # degenerate (collinear) hull
                pass
        diff = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((diff**2).sum(axis=2)).max())

    def nearest(self, coords) -> int:
        """Id of the point closest to ``coords`` (euclidean spaces)."""
        c = np.atleast_1d(np.asarray(coords, dtype=float))
        if c.size < self.dim:
            c = np.pad(c, (0, self.dim - c.size))
        return int(self.tree.query(c[: self.dim])[1])

    # -- derived spaces ------------------------------------------------

    def with_weights(self, weights) -> "FiniteSpace":
        return FiniteSpace(self.points, weights, self.metric, self.diameters, dict(self.meta), dict(self.fields), self.adjacency)

    def restrict(self, ids) -> "FiniteSpace":
        """Subspace on ``ids`` with weights kept (no renormalisation).

        Euclidean only; hop distances are not inherited by induced subgraphs.
        """
        if self.metric != "euclidean":
            raise ValueError("restrict is only defined for euclidean spaces")
        ids = np.asarray(ids, dtype=np.intp)
        meta = dict(self.meta)
        meta["parent_ids"] = ids
        fields = {k: np.asarray(v)[ids] for k, v in self.fields.items()}
        diam = None if self.diameters is None else self.diameters[ids]
        return FiniteSpace(self.points[ids], self.weights[ids], self.metric, diam, meta, fields)

    def crop(self, center: int, radius: float):
        """Closed ball ``B_radius[center]`` as a subspace plus the kept ids."""
        ids = self.ball(center, radius, closed=True)
        return self.restrict(ids), ids


def _positions(rows: np.ndarray, i: np.ndarray) -> np.ndarray:
    lookup = np.full(int(rows.max()) + 1, -1, dtype=np.intp)
    lookup[rows] = np.arange(rows.size)
    return lookup[i]


# ---------------------------------------------------------------------------
# fractal generators


def koch_alpha(t, theta1: float, theta2: float):
    """Local dimension 2 log 2 / log(2 + 2 cos(theta1 + t (theta2 - theta1)))."""
    if not (0 < theta1 <= theta2 < math.pi / 2):
        raise ValueError("koch requires 0 < theta1 <= theta2 < pi/2")
    t = np.asarray(t, dtype=float)
    out = 2 * math.log(2) / np.log(2 + 2 * np.cos(theta1 + t * (theta2 - theta1)))
    return float(out) if out.ndim == 0 else out


def koch_polyline(theta1: float, theta2: float, stage: int):
    """Vertices ``(4**stage + 1, 2)`` and per-segment angle intervals."""
    start = np.array([[0.0, 0.0]])
    end = np.array([[1.0, 0.0]])
    lo = np.array([float(theta1)])
    hi = np.array([float(theta2)])
    for _ in range(stage):
        mid = 0.5 * (lo + hi)
        vec = end - start
        length = np.hypot(vec[:, 0], vec[:, 1])
        u = vec / length[:, None]
        nrm = np.stack([-u[:, 1], u[:, 0]], axis=1)
        L = (length / (2 + 2 * np.cos(mid)))[:, None]
        p1 = start + L * u
        p2 = p1 + L * (np.cos(mid)[:, None] * u + np.sin(mid)[:, None] * nrm)
        p3 = end - L * u
        start = np.stack([start, p1, p2, p3], axis=1).reshape(-1, 2)
        end = np.stack([p1, p2, p3, end], axis=1).reshape(-1, 2)
        lo, hi = _split_intervals(lo, hi, [(0, 1), (1, 2), (2, 3), (3, 4)], 4)
    vertices = np.vstack([start, end[-1:]])
    return vertices, lo, hi


def fractal_cells(spec: FractalSpec) -> dict:
    """Raw stage-n cell geometry for gasket/carpet/vicsek.

    Gasket cells are triangles ``(ox, oy, side)`` (bottom-left corner),
    carpet cells rectangles ``(x, y, b, h)``, Vicsek cells squares
    ``(x, y, L)``; also returns the ratio interval of every cell.
    """
    spec.validate()
    r1, r2 = (float(x) for x in spec.params)
    lo = np.array([r1])
    hi = np.array([r2])
    if spec.kind == "gasket":
        cells = np.array([[0.0, 0.0, 1.0]])
        s3 = math.sqrt(3.0)
        for _ in range(spec.stage):
            rm = 0.5 * (lo + hi)
            ox, oy, side = cells.T
            s = rm * side
            gap = side - s
            kids = np.stack(
                [
                    np.stack([ox, oy, s], axis=1),
                    np.stack([ox + gap, oy, s], axis=1),
                    np.stack([ox + gap / 2, oy + s3 * gap / 2, s], axis=1),
                ],
                axis=1,
            )
            cells = kids.reshape(-1, 3)
            lo, hi = _split_intervals(lo, hi, [(0, 1), (1, 2), (2, 3)], 3)
    elif spec.kind == "carpet":
        cells = np.array([[0.0, 0.0, 1.0, 1.0]])
        for _ in range(spec.stage):
            rm = 0.5 * (lo + hi)
            x, y, b, h = cells.T
            cb, ch = b * (1 - rm) / 2, h * (1 - rm) / 2
            mb, mh = b * rm, h * rm
            # R1..R8 counter-clockwise from the bottom-left corner
            kids = [
                (x, y, cb, ch),
                (x + cb, y, mb, ch),
                (x + cb + mb, y, cb, ch),
                (x + cb + mb, y + ch, cb, mh),
                (x + cb + mb, y + ch + mh, cb, ch),
                (x + cb, y + ch + mh, mb, ch),
                (x, y + ch + mh, cb, ch),
                (x, y + ch, cb, mh),
            ]
            cells = np.stack([np.stack(k, axis=1) for k in kids], axis=1).reshape(-1, 4)
            lo, hi = _split_intervals(lo, hi, [(i, i + 1) for i in range(8)], 8)
    elif spec.kind == "vicsek":
        cells = np.array([[0.0, 0.0, 1.0]])
        for _ in range(spec.stage):
            rm = 0.5 * (lo + hi)
            x, y, L = cells.T
            c, m = L * (1 - rm) / 2, L * rm
            # R1, R3, R5, R7, R9 of the 3x3 decomposition
            kids = [(x, y, c), (x + c + m, y, c), (x + c, y + c, m), (x, y + c + m, c), (x + c + m, y + c + m, c)]
            cells = np.stack([np.stack(k, axis=1) for k in kids], axis=1).reshape(-1, 3)
            lo, hi = _split_intervals(lo, hi, [(0, 1), (2, 3), (1, 2), (0, 1), (2, 3)], 3)
    else:
        raise ValueError(f"no cell geometry for {spec.kind}")
    return {"cells": cells, "lo": lo, "hi": hi}


def _split_intervals(lo, hi, pieces, denom):
    d = (hi - lo) / denom
    new_lo = np.stack([lo + a * d for a, _ in pieces], axis=1).reshape(-1)
    new_hi = np.stack([lo + b * d for _, b in pieces], axis=1).reshape(-1)
    # pin the top endpoint exactly
    top = np.stack([np.full_like(lo, b == denom, dtype=bool) for _, b in pieces], axis=1).reshape(-1)
    new_hi[top] = np.repeat(hi, len(pieces))[top]
    return new_lo, new_hi


def _check_cap(count: int, cap: int):
    if count > cap:
        raise ValueError(f"point count {count} exceeds cap {cap}")


def build_fractal(spec: FractalSpec, point_cap: int = DEFAULT_POINT_CAP) -> FiniteSpace:
    """Stage-n approximation of ``spec`` with uniform cell masses."""
    spec.validate()
    if spec.kind == "euclidean_grid":
        dim, R, h = spec.params
        return build_euclidean(int(dim), R, h, point_cap=point_cap)
    if spec.kind == "path_graph":
        return build_path(int(spec.params[0]))
    _check_cap(spec.expected_count(), point_cap)
    meta: dict[str, Any] = {"kind": spec.kind, "stage": int(spec.stage), "params": [float(x) for x in spec.params]}
    if spec.kind == "koch":
        t1, t2 = spec.params
        verts, lo, hi = koch_polyline(t1, t2, spec.stage)
        pts = 0.5 * (verts[:-1] + verts[1:])
        seg = verts[1:] - verts[:-1]
        diam = np.hypot(seg[:, 0], seg[:, 1])
        m = pts.shape[0]
        fields = {"t": (np.arange(m) + 0.5) / m, "theta_lo": lo, "theta_hi": hi}
    else:
        geo = fractal_cells(spec)
        cells = geo["cells"]
        if spec.kind == "gasket":
            ox, oy, side = cells.T
            pts = np.stack([ox + side / 2, oy + side * math.sqrt(3) / 6], axis=1)
            diam = side.copy()
        elif spec.kind == "carpet":
            x, y, b, h = cells.T
            pts = np.stack([x + b / 2, y + h / 2], axis=1)
            diam = np.hypot(b, h)
        else:
            x, y, L = cells.T
            pts = np.stack([x + L / 2, y + L / 2], axis=1)
            diam = L * math.sqrt(2)
        fields = {"ratio": 0.5 * (geo["lo"] + geo["hi"])}
    m = pts.shape[0]
    return FiniteSpace(pts, np.full(m, 1.0 / m), "euclidean", diam, meta, fields)


def build_euclidean(dim: int, R: float, h: float, point_cap: int = DEFAULT_POINT_CAP) -> FiniteSpace:
    """Lattice ``h Z^dim`` intersected with the closed ball B_{R+1}(0)."""
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    if not (0 < h < R):
        raise ValueError("grid step must satisfy 0 < h < R (grid too coarse to contain interior points)")
    k = int(math.floor((R + 1) / h + 1e-9))
    count = (2 * k + 1) ** dim
    _check_cap(count if dim == 1 else int(math.pi * (k + 1) ** 2), point_cap)
    ax = np.arange(-k, k + 1) * h
    if dim == 1:
        pts = ax[:, None]
    else:
        gx, gy = np.meshgrid(ax, ax, indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        keep = (pts**2).sum(axis=1) <= (R + 1) ** 2 * (1 + 1e-12)
        pts = pts[keep]
    _check_cap(pts.shape[0], point_cap)
    m = pts.shape[0]
    meta = {"kind": "euclidean_grid", "stage": 0, "params": [float(dim), float(R), float(h)]}
    return FiniteSpace(pts, np.full(m, float(h) ** dim), "euclidean", np.full(m, h * math.sqrt(dim)), meta)


def build_path(n: int) -> FiniteSpace:
    """Path graph on states 0..n with the hop metric and unit weights."""
    if int(n) != n or n < 2:
        raise ValueError("path graph needs n >= 2")
    n = int(n)
    k = np.arange(n)
    adj = sp.coo_matrix((np.ones(2 * n), (np.r_[k, k + 1], np.r_[k + 1, k])), shape=(n + 1, n + 1)).tocsr()
    pts = np.arange(n + 1, dtype=float)[:, None]
    meta = {"kind": "path_graph", "stage": 0, "params": [float(n)]}
    return FiniteSpace(pts, np.ones(n + 1), "graph_distance", np.ones(n + 1), meta, adjacency=adj)


def assign_measure(space: FiniteSpace, mode: str = "uniform_cell", Q: ScalarField | None = None) -> FiniteSpace:
    """Replace the weights and renormalise them to total mass 1.

    ``uniform_cell`` gives every cell the same mass; ``diameter_power`` weights
    a cell by ``diameter ** Q(center)`` (a discrete version of the measure
    built from the local dimension).
    """
    if mode == "uniform_cell":
        w = np.ones(space.n)
    elif mode == "diameter_power":
        if Q is None:
            raise ValueError("diameter_power needs a Q field")
        q = np.asarray(Q.values if isinstance(Q, ScalarField) else Q, dtype=float)
        if q.shape != (space.n,) or not np.all(np.isfinite(q)) or np.any(q <= 0):
            raise ValueError("Q must be finite, positive, one value per point")
        if space.diameters is None:
            raise ValueError("space has no cell diameters")
        w = space.diameters**q
    else:
        raise ValueError(f"unknown measure mode {mode!r}")
    total = w.sum()
    if not total > 0:
        raise ValueError("zero total weight")
    w = w / total
    meta = dict(space.meta)
    meta["measure"] = mode
    return FiniteSpace(space.points, w, space.metric, space.diameters, meta, dict(space.fields), space.adjacency)


def koch_alpha_field(space: FiniteSpace) -> ScalarField:
    """``koch_alpha`` evaluated at the curve parameter of every segment."""
    if space.meta.get("kind") != "koch":
        raise ValueError("not a Koch space")
    t1, t2 = space.meta["params"]
    return ScalarField(koch_alpha(space.fields["t"], t1, t2), "alpha")


# ---------------------------------------------------------------------------
# persistence


def space_arrays(space: FiniteSpace) -> dict:
    """Flat array dictionary for ``np.savez``; inverse of ``space_from_arrays``."""
    arrays = {"points": space.points, "weights": space.weights}
    if space.diameters is not None:
        arrays["diameters"] = space.diameters
    if space.adjacency is not None:
        adj = space.adjacency.tocsr()
        arrays.update(adj_indptr=adj.indptr, adj_indices=adj.indices, adj_data=adj.data)
    for k, v in space.fields.items():
        arrays[f"field_{k}"] = np.asarray(v)
    header = {"metric": space.metric, "meta": _jsonable(space.meta)}
    arrays["space_header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    return arrays


def space_from_arrays(z) -> FiniteSpace:
    header = json.loads(bytes(z["space_header"]).decode())
    m = z["points"].shape[0]
    adj = None
    if "adj_indptr" in z:
        adj = sp.csr_matrix((z["adj_data"], z["adj_indices"], z["adj_indptr"]), shape=(m, m))
    fields = {k[len("field_"):]: np.array(z[k]) for k in z.keys() if k.startswith("field_")}
    diam = np.array(z["diameters"]) if "diameters" in z else None
    return FiniteSpace(np.array(z["points"]), np.array(z["weights"]), header["metric"], diam, header["meta"], fields, adj)


def save_space(space: FiniteSpace, path) -> None:
    buf = io.BytesIO()
    np.savez(buf, **space_arrays(space))
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_space(path) -> FiniteSpace:
    with np.load(path, allow_pickle=False) as z:
        return space_from_arrays(z)


def export_points_csv(space: FiniteSpace, path) -> None:
    """``id,x,y,weight,diameter``; ``y`` is 0 for one-dimensional spaces."""
    pts = space.points
    y = pts[:, 1] if pts.shape[1] > 1 else np.zeros(space.n)
    d = space.diameters if space.diameters is not None else np.full(space.n, np.nan)
    with open(path, "w") as fh:
        fh.write("id,x,y,weight,diameter\n")
        for i in range(space.n):
            fh.write(f"{i},{pts[i, 0]:.17g},{y[i]:.17g},{space.weights[i]:.17g},{d[i]:.17g}\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items() if not isinstance(v, np.ndarray) or v.size < 64}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
