import json

import numpy as np
import pytest

from exitdim._parallel import map_blocks, n_threads
from exitdim.pipeline import RunConfig, ResultBundle, dumps_json, export, load_bundle, resolve_centers, run_pipeline
from exitdim.spaces import build_fractal, FractalSpec

GRID = [0.0625, 0.0442, 0.03125, 0.0221, 0.015625]


def small_config(**kw):
    d = dict(space={"kind": "gasket", "stage": 7, "params": [0.5, 0.5]}, centers=[[0.5, 0.0]], R_grid=[0.25], kernel_kinds=["graph_symmetrized"], scale_grid=GRID, fk_fractions=[0.25, 0.125])
    d.update(kw)
    return RunConfig(**d)


@pytest.fixture(scope="module")
def bundle():
    return run_pipeline(small_config(), write=False)


@pytest.mark.parametrize(
    "field,value",
    [("scale_grid", []), ("R_grid", []), ("R_grid", [0.1, 0.2]), ("centers", []), ("kernel_kinds", ["ball_p"]), ("tolerances", {"r_squared": -1}), ("measure", "weird")],
)
def test_validation_names_field(field, value):
    with pytest.raises(ValueError, match=field):
        small_config(**{field: value})


def test_unwritable_output():
    with pytest.raises(ValueError, match="results_path"):
        small_config(results_path="/nonexistent/dir/r.json")


def test_unknown_key():
    with pytest.raises(ValueError, match="unknown config keys"):
        RunConfig.from_dict(dict(small_config().to_dict(), bogus=1))


def test_bundle_contents(bundle):
    c = bundle.centers[0]
    assert c["alpha"]["slope"] == pytest.approx(np.log(3) / np.log(2), abs=0.15)
    beta = c["beta"]["graph_symmetrized"]
    assert not beta["flagged"]
    assert abs(beta["value"] - np.log(5) / np.log(2)) < 0.3
    assert bundle.spectral["faber_krahn"]["c_min"] > 0
    assert bundle.spectral["faber_krahn"]["tent_dominates"]
    assert "C_est" in bundle.regularity["time"]
    # provenance: every series row names its sweep tuple
    for row in bundle.series:
        assert {"center", "R", "scale", "e_plus", "ball_mass"} <= set(row)
    runs = beta["fits"][0]["series"][0]["runs"]
    assert [r["seed"] for r in runs] == [0, 1, 2]
    assert bundle.provenance["config_hash"] == small_config().digest()


def test_determinism_byte_identical(tmp_path, bundle):
    again = run_pipeline(small_config(), write=False)
    export(bundle, "json", tmp_path / "a.json")
    export(again, "json", tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_json_round_trip(tmp_path, bundle):
    export(bundle, "json", tmp_path / "r.json")
    back = load_bundle(tmp_path / "r.json")
    assert back == bundle
    export(back, "json", tmp_path / "r2.json")
    assert (tmp_path / "r.json").read_bytes() == (tmp_path / "r2.json").read_bytes()


def test_csv_export(tmp_path, bundle):
    export(bundle, "csv", tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "center,scale,e_plus,ball_mass"
    scales = [float(l.split(",")[1]) for l in lines[1:]]
    assert scales == sorted(scales, reverse=True)
    with pytest.raises(ValueError):
        export(bundle, "xml", tmp_path / "s.xml")


def test_dumps_json_floats():
    text = dumps_json({"b": 0.1, "a": [1.0, float("nan"), 2], "c": {"z": True, "y": None}})
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert "0.10000000000000001" in text and "null" in text
    back = json.loads(text)
    assert back["b"] == 0.1 and back["a"][0] == 1.0 and isinstance(back["a"][0], float)


def test_resolve_centers(koch6):
    gasket = build_fractal(FractalSpec("gasket", 4, (0.5, 0.5)))
    assert resolve_centers(gasket, [3, [0.5, 0.0]])[0] == 3
    idx = resolve_centers(koch6, [{"t": 0.5}])[0]
    assert abs(koch6.fields["t"][idx] - 0.5) < 1 / koch6.n
    with pytest.raises(ValueError):
        resolve_centers(gasket, [10**6])


def test_stage_error_names_stage():
    from exitdim.pipeline import PipelineError

    cfg = small_config(space={"kind": "gasket", "stage": 3, "params": [0.5, 0.5]}, scale_grid=None, alpha_radii=None)
    with pytest.raises(PipelineError, match="alpha"):
        run_pipeline(cfg, write=False)


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("EXITDIM_THREADS", "1")
    assert n_threads() == 1
    assert map_blocks(lambda x: x * x, [3, 1, 2]) == [9, 1, 4]
    monkeypatch.setenv("EXITDIM_THREADS", "3")
    assert map_blocks(lambda x: -x, list(range(10))) == [-x for x in range(10)]
