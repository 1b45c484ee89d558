import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from transconv import cli, convolution
from transconv.brascamp_lieb import PiecewiseLinearMap, box_complex, dual_parallelepipeds
from transconv.families import paraboloid_height
from transconv.scenarios import SCHEMA_VERSION, generate, load_scenario, run_scenario
from transconv.surfaces import PolyhedralSurface

BUNDLED = Path(__file__).resolve().parents[1] / "scenarios" / "coordinate-planes" / "scenario.json"


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def test_bundled_scenario_passes(tmp_path, capsys):
    out = tmp_path / "report.json"
    assert run_cli("run", "--scenario", BUNDLED, "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["schema_version"] == SCHEMA_VERSION
    assert rep["results"]["theorem1"]["ratio"] == pytest.approx(1.0, abs=1e-10)
    assert rep["passed"] and all(c["passed"] for c in rep["checks"])


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "transconv", "run", "--scenario", str(BUNDLED),
                           "--out", str(tmp_path / "r.json")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


def test_bad_signature_exits_one(tmp_path, capsys):
    doc = json.loads(BUNDLED.read_text())
    doc["signature"] = [3, 2, 2, 1]
    p = tmp_path / "scenario.json"
    p.write_text(json.dumps(doc))
    assert run_cli("run", "--scenario", p) == 1
    assert "n1 + n2 + n3 = 2n" in capsys.readouterr().err


def test_malformed_json_exits_one(tmp_path, capsys):
    p = tmp_path / "scenario.json"
    p.write_text("{not json")
    assert run_cli("run", "--scenario", p) == 1
    assert "invalid JSON" in capsys.readouterr().err


def test_missing_file_exits_one(tmp_path, capsys):
    doc = json.loads(BUNDLED.read_text())
    doc["files"]["S1"] = "nowhere.json"
    p = tmp_path / "scenario.json"
    p.write_text(json.dumps(doc))
    assert run_cli("run", "--scenario", p) == 1
    assert "not found" in capsys.readouterr().err


def test_failing_bound_exits_two(tmp_path, capsys):
    # linear maps whose rotated-kernel transversality beats the determinant:
    # the extremal parallelepipeds exceed the sqrt(rho / gamma0) constant
    A = [np.array([[0.0, 1, 0], [0, 0, 1]]),
         np.array([[2 ** -0.5, -2 ** -0.5, 0], [0, 0, 1]]),
         np.array([[1.0, 0, 0], [0, 1, 0]])]
    dens, _ = dual_parallelepipeds(*A)
    cells = box_complex(-3 * np.ones(3), 3 * np.ones(3))
    files = {}
    for m, (Am, f) in enumerate(zip(A, dens), 1):
        (tmp_path / f"phi{m}.json").write_text(json.dumps(PiecewiseLinearMap.linear(cells, Am).to_dict()))
        (tmp_path / f"f{m}.json").write_text(json.dumps(f.to_dict()))
        files[f"phi{m}"] = f"phi{m}.json"
        files[f"f{m}"] = f"f{m}.json"
    doc = {"schema_version": 1, "kind": "bl-pl", "signature": [3, 2, 2, 2], "files": files,
           "params": {}, "level": 3, "tolerance": 1e-6}
    (tmp_path / "scenario.json").write_text(json.dumps(doc))
    out = tmp_path / "report.json"
    assert run_cli("run", "--scenario", tmp_path / "scenario.json", "--out", out) == 2
    rep = json.loads(out.read_text())
    assert not rep["passed"]
    t2 = rep["results"]["theorem2"]
    assert t2["lhs"] > t2["rhs"]


@pytest.mark.parametrize("kind,params", [
    ("conv-linear", []), ("conv-polyhedral", ["codims=[1,1,2]"]), ("conv-graph", []),
    ("bl-linear", ["codims=[2,1,1]"]), ("bl-pl", []), ("sweep", ["gamma_grid=[0.3,1.0]"]),
])
def test_generate_is_deterministic(tmp_path, kind, params):
    args = [a for p in params for a in ("--param", p)]
    for d in ("a", "b"):
        assert run_cli("generate", "--scenario", kind, "--out", tmp_path / d, "--seed", 42,
                       *args) == 0
    fa = sorted(p.name for p in (tmp_path / "a").iterdir())
    fb = sorted(p.name for p in (tmp_path / "b").iterdir())
    assert fa == fb and "scenario.json" in fa
    for name in fa:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    sc = load_scenario(tmp_path / "a" / "scenario.json")
    assert sc.kind == kind and sc.seed == 42


def test_generated_scenarios_pass(tmp_path):
    for kind in ("conv-polyhedral", "bl-linear", "bl-pl"):
        path = generate(kind, 7, tmp_path / kind)
        rep = run_scenario(load_scenario(path))
        assert rep["passed"], (kind, rep["checks"])


def test_conv_linear_gamma_floor_and_oracle(tmp_path):
    for seed in range(5):
        path = generate("conv-linear", seed, tmp_path / str(seed), samples=0)
        sc = load_scenario(path)
        assert sc.params["gamma"] >= 0.1
    out = tmp_path / "rep.json"
    assert run_cli("run", "--scenario", tmp_path / "0" / "scenario.json", "--samples", 200000,
                   "--seed", 1, "--out", out) == 0
    oracle = json.loads(out.read_text())["results"]["oracle"]
    assert oracle["z_score"] <= 3 and oracle["samples"] == 200000


def test_conv_graph_mesh_within_bound(tmp_path):
    path = generate("conv-graph", 0, tmp_path, {"mesh_level": 3, "curvature": 0.8})
    sc = load_scenario(path)
    S3 = PolyhedralSurface.from_dict(json.loads(sc.path("S3").read_text()), sig_index=3)
    h = paraboloid_height(0.8)
    # barycentric sample points of every facet against the true graph
    w = np.random.default_rng(0).dirichlet(np.ones(3), size=64)
    pts = np.einsum("sv,fvn->fsn", w, S3.vertices).reshape(-1, 3)
    err = np.abs(pts[:, 2] - h(pts[:, :2]))
    assert err.max() <= sc.params["hausdorff_bound"] * (1 + 1e-12)
    assert err.max() > 0.25 * sc.params["hausdorff_bound"]


def test_thread_count_does_not_change_results(tmp_path, monkeypatch):
    path = generate("conv-polyhedral", 3, tmp_path, {"cells": 2})
    sc = load_scenario(path)
    # small chunks so the pool really splits the facet pairs
    monkeypatch.setattr(convolution, "PAIR_CHUNK", 3)
    r1 = run_scenario(sc.with_overrides(threads=1))
    monkeypatch.setenv("TRANSCONV_THREADS", "4")
    r4 = run_scenario(sc)
    for r in (r1, r4):
        r.pop("wall_time")
    assert json.dumps(r1, sort_keys=True) == json.dumps(r4, sort_keys=True)


def test_sweep_writes_csv(tmp_path):
    path = generate("sweep", 0, tmp_path, {"gamma_grid": [0.25, 1.0]}, level=2)
    out = tmp_path / "report.json"
    assert run_cli("run", "--scenario", path, "--out", out) == 0
    lines = (tmp_path / "report.csv").read_text().strip().split("\n")
    assert lines[0].startswith("gamma0,ratio") and len(lines) == 3
