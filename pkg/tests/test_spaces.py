import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from exitdim.spaces import (
    FiniteSpace,
    FractalSpec,
    ScalarField,
    assign_measure,
    build_euclidean,
    build_fractal,
    build_path,
    export_points_csv,
    koch_alpha,
    koch_alpha_field,
    koch_polyline,
    load_space,
    save_space,
)

from conftest import random_cloud

KOCH = (math.radians(5.0), math.radians(80.0))


@pytest.mark.parametrize("kind,stage,params,count", [("gasket", 4, (0.5, 0.5), 81), ("carpet", 2, (1 / 3, 1 / 3), 64), ("vicsek", 3, (1 / 3, 1 / 3), 125), ("koch", 3, KOCH, 64)])
def test_cell_counts(kind, stage, params, count):
    spec = FractalSpec(kind, stage, params)
    assert spec.expected_count() == count
    assert build_fractal(spec).n == count


def test_koch_constant_angle_segment_length():
    verts, _, _ = koch_polyline(math.pi / 3, math.pi / 3, 3)
    seg = np.hypot(*np.diff(verts, axis=0).T)
    np.testing.assert_allclose(seg, 1 / 27, rtol=1e-12)


def test_koch_endpoints_fixed():
    verts, _, _ = koch_polyline(*KOCH, 5)
    np.testing.assert_allclose(verts[0], [0, 0], atol=1e-14)
    np.testing.assert_allclose(verts[-1], [1, 0], atol=1e-12)


def test_koch_alpha_range():
    a = koch_alpha(np.array([0.0, 1.0]), *KOCH)
    assert a[0] == pytest.approx(math.log(4) / math.log(2 + 2 * math.cos(KOCH[0])), rel=1e-12)
    assert round(a[0], 3) == 1.001
    assert round(a[1], 3) == 1.625


@given(st.floats(0, 1), st.floats(0, 1))
def test_koch_alpha_monotone(s, t):
    lo, hi = sorted((s, t))
    assert koch_alpha(lo, *KOCH) <= koch_alpha(hi, *KOCH) + 1e-15


def test_koch_alpha_field_matches_parameter():
    sp = build_fractal(FractalSpec("koch", 4, KOCH))
    f = koch_alpha_field(sp)
    assert f.label == "alpha"
    np.testing.assert_allclose(f.values, koch_alpha(sp.fields["t"], *KOCH))


def test_euclidean_grid():
    sp = build_euclidean(1, 1.0, 0.01)
    assert sp.n == 401
    assert sp.points[sp.nearest([0.0]), 0] == 0.0
    sp2 = build_euclidean(2, 0.5, 0.1)
    r = np.linalg.norm(sp2.points, axis=1)
    assert r.max() <= 1.5 + 1e-12


def test_euclidean_too_coarse():
    with pytest.raises(ValueError, match="too coarse"):
        build_euclidean(1, 0.1, 0.2)


def test_point_cap():
    with pytest.raises(ValueError):
        build_fractal(FractalSpec("gasket", 10, (0.5, 0.5)), point_cap=1000)


@pytest.mark.parametrize("spec", [FractalSpec("koch", 2, (1.0, 0.5)), FractalSpec("gasket", 2, (0.6, 0.6)), FractalSpec("nope", 1, ()), FractalSpec("gasket", -1, (0.5, 0.5))])
def test_invalid_specs(spec):
    with pytest.raises(ValueError):
        spec.validate()


def test_spec_dict_round_trip():
    spec = FractalSpec("koch", 4, KOCH)
    assert FractalSpec.from_dict(spec.to_dict()) == spec
    deg = FractalSpec.from_dict({"kind": "koch", "stage": 4, "params": [5.0, 80.0], "degrees": True})
    np.testing.assert_allclose(deg.params, KOCH)


def test_path_graph_metric():
    p = build_path(6)
    np.testing.assert_array_equal(p.distances_from(0), np.arange(7))
    np.testing.assert_array_equal(p.ball(3, 2, closed=True), [1, 2, 3, 4, 5])


def test_scalar_field_validation():
    with pytest.raises(ValueError):
        ScalarField(np.array([1.0, -1.0]), "beta")
    with pytest.raises(ValueError):
        ScalarField(np.array([np.nan]), "other")


def test_assign_measure(koch6):
    Q = ScalarField(koch_alpha_field(koch6).values, "Q")
    sp = assign_measure(koch6, "diameter_power", Q)
    assert sp.total_mass == pytest.approx(1.0, abs=1e-14)
    w = koch6.diameters ** Q.values
    np.testing.assert_allclose(sp.weights, w / w.sum(), rtol=1e-13)
    with pytest.raises(ValueError):
        assign_measure(koch6, "diameter_power")


@given(st.integers(0, 10**6), st.floats(0.01, 0.6), st.floats(0.01, 0.6))
def test_ball_monotone_in_radius(seed, r1, r2):
    sp = random_cloud(seed, 60)
    lo, hi = sorted((r1, r2))
    small = set(sp.ball(0, lo).tolist())
    big = set(sp.ball(0, hi).tolist())
    assert small <= big


@given(st.integers(0, 10**6), st.floats(0.02, 0.5))
def test_pairs_match_brute_force(seed, r):
    sp = random_cloud(seed, 50)
    i, j, d = sp.pairs(r)
    D = sp.distance_matrix()
    bi, bj = np.nonzero(D < r)
    assert sorted(zip(i.tolist(), j.tolist())) == sorted(zip(bi.tolist(), bj.tolist()))
    np.testing.assert_allclose(d, D[i, j], atol=1e-14)


def test_restrict_keeps_weights(gasket6):
    ids = gasket6.ball(10, 0.2, closed=True)
    sub = gasket6.restrict(ids)
    np.testing.assert_array_equal(sub.meta["parent_ids"], ids)
    np.testing.assert_array_equal(sub.weights, gasket6.weights[ids])


def test_save_load_round_trip(tmp_path, koch6):
    save_space(koch6, tmp_path / "s.bin")
    back = load_space(tmp_path / "s.bin")
    np.testing.assert_array_equal(back.points, koch6.points)
    np.testing.assert_array_equal(back.weights, koch6.weights)
    np.testing.assert_array_equal(back.fields["t"], koch6.fields["t"])
    assert back.meta["kind"] == "koch"
    p = build_path(5)
    save_space(p, tmp_path / "p.bin")
    assert (load_space(tmp_path / "p.bin").adjacency != p.adjacency).nnz == 0


def test_points_csv(tmp_path, gasket6):
    export_points_csv(gasket6, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "id,x,y,weight,diameter"
    assert len(lines) == gasket6.n + 1
    assert float(lines[1].split(",")[3]) == gasket6.weights[0]


def test_weights_must_be_positive():
    with pytest.raises(ValueError):
        FiniteSpace(np.zeros((2, 1)), np.array([1.0, 0.0]))
