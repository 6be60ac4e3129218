import json

import pytest

from exitdim.cli import main


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "spec.json").write_text(json.dumps({"kind": "gasket", "stage": 6, "params": [0.5, 0.5]}))
    return tmp_path


def test_full_chain(workdir):
    assert main(["generate", "--spec", "spec.json", "--out", "space.bin", "--export-csv", "points.csv"]) == 0
    assert (workdir / "points.csv").read_text().startswith("id,x,y,weight,diameter\n")
    assert main(["net", "--space", "space.bin", "--epsilon", "0.05", "--seed", "7", "--out", "net.json"]) == 0
    net = json.loads((workdir / "net.json").read_text())
    assert net["epsilon"] == 0.05 and net["members"]
    assert main(["graph", "--net", "net.json", "--kind", "proximity", "--rho", "2", "--out", "graph.json"]) == 0
    g = json.loads((workdir / "graph.json").read_text())
    assert all(len(e) == 2 for e in g["edges"])
    assert main(["kernel", "--kind", "graph_symmetrized", "--graph", "graph.json", "--out", "gk.bin", "--dump-csv", "gk.csv"]) == 0
    assert (workdir / "gk.csv").read_text().startswith("row,col,value\n")
    assert main(["kernel", "--kind", "ball_w", "--space", "space.bin", "--r", "0.08", "--out", "kernel.bin"]) == 0
    assert main(["exit", "--kernel", "kernel.bin", "--center", "364", "--radius", "0.25", "--out", "exit.csv"]) == 0
    rows = (workdir / "exit.csv").read_text().splitlines()
    assert rows[0] == "id,phi" and len(rows) > 10
    assert main(["exit", "--kernel", "kernel.bin", "--center", "364", "--radius", "0.25", "--out", "mc.csv", "--mc", "500", "--seed", "1"]) == 0
    first = (workdir / "mc.csv").read_text()
    main(["exit", "--kernel", "kernel.bin", "--center", "364", "--radius", "0.25", "--out", "mc.csv", "--mc", "500", "--seed", "1"])
    assert (workdir / "mc.csv").read_text() == first
    assert main(["spectrum", "--kernel", "kernel.bin", "--center", "364", "--radius", "0.25", "--out", "spec_out.json"]) == 0
    spec = json.loads((workdir / "spec_out.json").read_text())
    assert {"lambda1", "spectral_radius", "faber_krahn", "green_symmetry_violation"} <= set(spec)
    assert 0 < spec["spectral_radius"] < 1


def test_exponents_and_run(workdir):
    (workdir / "s8.json").write_text(json.dumps({"kind": "gasket", "stage": 7, "params": [0.5, 0.5]}))
    main(["generate", "--spec", "s8.json", "--out", "s8.bin"])
    sweep = {"centers": [[0.5, 0.0]], "R_grid": [0.25], "kernel_kinds": ["graph_symmetrized"], "scale_grid": [0.0625, 0.0442, 0.03125, 0.0221, 0.015625]}
    (workdir / "sweep.json").write_text(json.dumps(sweep))
    assert main(["exponents", "--space", "s8.bin", "--config", "sweep.json", "--out", "results.json", "--plot-data", "series.csv"]) == 0
    res = json.loads((workdir / "results.json").read_text())
    assert {"alpha", "beta"} <= set(res["centers"][0])
    assert (workdir / "series.csv").read_text().startswith("center,scale,e_plus,ball_mass\n")
    run = dict(sweep, space={"kind": "gasket", "stage": 7, "params": [0.5, 0.5]}, p_kernel=False, faber_krahn=False)
    (workdir / "run.json").write_text(json.dumps(run))
    assert main(["run", "--config", "run.json", "--out", "a.json"]) == 0
    assert main(["run", "--config", "run.json", "--out", "b.json", "--seed", "0"]) == 0
    assert (workdir / "a.json").read_bytes() == (workdir / "b.json").read_bytes()
    # flags override the file
    assert main(["run", "--config", "run.json", "--out", "c.json", "--R-grid", "[0.2]", "--scale-grid", "[0.05, 0.035, 0.025, 0.0177]"]) == 0
    assert json.loads((workdir / "c.json").read_text())["provenance"]["config"]["R_grid"] == [0.2]


def test_exit_codes(workdir, capsys):
    assert main(["exit", "--kernel", "missing.bin", "--center", "1", "--radius", "0.1", "--out", "x.csv"]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    (workdir / "bad.json").write_text(json.dumps({"space": {"kind": "gasket", "stage": 5, "params": [0.5, 0.5]}, "centers": [0], "R_grid": [0.25], "scale_grid": []}))
    assert main(["run", "--config", "bad.json"]) == 1
    assert "scale_grid" in capsys.readouterr().err


def test_numeric_failure_exit_code(workdir):
    (workdir / "coarse.json").write_text(json.dumps({"space": {"kind": "gasket", "stage": 3, "params": [0.5, 0.5]}, "centers": [0], "R_grid": [0.25]}))
    assert main(["run", "--config", "coarse.json"]) == 2


def test_verify_single_criterion(workdir):
    assert main(["verify", "--only", "1", "--json", "v.json"]) == 0
    out = json.loads((workdir / "v.json").read_text())
    assert out[0]["passed"] is True
