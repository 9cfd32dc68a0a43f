import csv
import hashlib
import json
import subprocess
import sys

import pytest

from doubling.cli import main, parse_piece, parse_real
from doubling.errors import ConfigError
from doubling.scenarios import LOG5_LOG9


def run(*args):
    return main([str(a) for a in args])


def read_json(path):
    return json.loads(path.read_text())


@pytest.fixture
def cantor4(tmp_path):
    out = tmp_path / "gen"
    assert run("gen", "cantor", "--ratio", "1/3", "--level", 4, "--out", out) == 0
    return out / "space.json"


@pytest.fixture
def singleton(tmp_path):
    path = tmp_path / "one.json"
    path.write_text(json.dumps({"points": [{"id": "p", "coords": [0.5]}], "metric": {"type": "euclidean"}}))
    return path


def test_parse_real_forms():
    assert parse_real("1/3", "x") == pytest.approx(1 / 3)
    assert parse_real("log5/log9", "x") == pytest.approx(LOG5_LOG9)
    assert parse_real(0.25, "x") == 0.25
    with pytest.raises(ConfigError):
        parse_real("five", "x")
    with pytest.raises(ConfigError):
        parse_real("log5/log1", "x")


def test_parse_piece():
    sp = parse_piece("cantor:1/9:2L:[1,2]", 1)
    assert sp.n == 8
    with pytest.raises(ConfigError):
        parse_piece("cantor:1/9:L:[1,2]", None)
    with pytest.raises(ConfigError):
        parse_piece("koch:1/3:2:[0,1]", 2)


def test_gen_cantor(cantor4):
    doc = read_json(cantor4)
    assert doc["size"] == 32 and len(doc["points"]) == 32
    man = read_json(cantor4.parent / "manifest.json")
    assert [e["file"] for e in man["files"]] == ["space.json"]
    assert man["files"][0]["sha256"] == hashlib.sha256(cantor4.read_bytes()).hexdigest()


def test_gen_bad_ratio_exit2(tmp_path):
    assert run("gen", "cantor", "--ratio", "0.6", "--level", 2, "--out", tmp_path) == 2


def test_gen_union_equals_touching(tmp_path):
    assert run("gen", "union", "cantor:1/3:2L:[0,1]", "cantor:1/9:L:[1,2]", "--level", 2, "--out", tmp_path / "u") == 0
    assert run("gen", "touching", "--level", 2, "--out", tmp_path / "t") == 0
    u, t = read_json(tmp_path / "u/space.json"), read_json(tmp_path / "t/space.json")
    assert [p["coords"] for p in u["points"]] == [p["coords"] for p in t["points"]]
    nu = read_json(tmp_path / "t/branching_measure.json")
    assert sum(nu["masses"].values()) == pytest.approx(1.0)


def test_dims_outputs(tmp_path, cantor4):
    out = tmp_path / "dims"
    assert run("dims", "--space", cantor4, "--out", out) == 0
    doc = read_json(out / "dims.json")
    assert doc["size"] == 32 and doc["radii_policy"] == "dyadic"
    with (out / "upper_curve.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[0]["gamma"]) == 0.0
    assert len(rows) == 151
    assert 0 <= doc["upper_knee"] <= 1.5


def test_dims_singleton(tmp_path, singleton):
    assert run("dims", "--space", singleton, "--radii", "spectrum", "--out", tmp_path) == 0
    assert read_json(tmp_path / "dims.json")["observations"] >= 1


def test_dims_bad_resolution(tmp_path, cantor4):
    assert run("dims", "--space", cantor4, "--resolution", 0, "--out", tmp_path) == 2


def test_measure_singleton(tmp_path, singleton):
    assert run("measure", "--space", singleton, "--a", 16, "--s-prime", 0.5, "--t-prime", 0, "--out", tmp_path) == 0
    doc = read_json(tmp_path / "measure.json")
    assert doc["masses"] == {"p": 1.0}


def test_measure_rejects_s_prime_below_s(tmp_path, cantor4):
    code = run("measure", "--space", cantor4, "--s", 0.7, "--t", 0.5, "--s-prime", 0.6, "--t-prime", 0.4, "--out", tmp_path)
    assert code == 2


def test_measure_then_verify(tmp_path, cantor4):
    m = tmp_path / "m"
    assert run("measure", "--space", cantor4, "--a", 9, "--raw", "--s-prime", "log5/log9", "--t-prime", "log2/log9", "--out", m) == 0
    steps = read_json(m / "steps.json")
    assert steps and all(s["passed"] for s in steps)
    # 9**-2 equals the smallest gap 3**-4
    assert read_json(m / "hierarchy.json")["depth"] == 2
    v = tmp_path / "v"
    code = run("verify", "--space", cantor4, "--measure", m / "measure.json", "--gamma-upper", 0.65, "--gamma-lower", 0.6, "--out", v)
    assert code == 0
    rep = read_json(v / "report.json")
    assert rep["passed"]
    assert (v / "ratio_plot.csv").read_text().startswith("k,min_ratio,max_ratio")


def test_verify_missing_point_exit3(tmp_path, cantor4):
    doc = read_json(cantor4)
    ids = [p["id"] for p in doc["points"]]
    masses = {str(i): 1 / (len(ids) - 1) for i in ids[1:]}
    path = tmp_path / "mu.json"
    path.write_text(json.dumps({"masses": masses}))
    assert run("verify", "--space", cantor4, "--measure", path, "--gamma-upper", 0.6, "--gamma-lower", 0.6, "--out", tmp_path / "v") == 3


def test_missing_file_exit2(tmp_path):
    assert run("dims", "--space", tmp_path / "nope.json", "--out", tmp_path) == 2


def test_unknown_flag_exit2(tmp_path):
    assert run("dims", "--bogus", "--out", tmp_path) == 2


def test_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"command": "gen", "kind": "cantor", "ratio": "1/3", "level": 3, "out": str(tmp_path / "o")}))
    assert run("--config", cfg) == 0
    assert read_json(tmp_path / "o/space.json")["size"] == 16
    cfg.write_text(json.dumps({"command": "gen", "colour": "red"}))
    assert run("--config", cfg) == 2


def test_demo_level0_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("demo", "--level", 0, "--trend-levels", 1, 2, "--out", a) == 0
    assert run("demo", "--level", 0, "--trend-levels", 1, 2, "--out", b) == 0
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    summary = read_json(a / "summary.json")
    assert [r["scenario"] for r in summary["scenarios"]] == ["cantor", "disjoint", "touching"]
    assert summary["nu_non_doubling_trend"] is True
    for name in ("cantor", "disjoint", "touching"):
        assert (a / name / "measure.json").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "doubling", "gen", "cantor", "--ratio", "1/3", "--level", "1", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("4 points")


def test_config_with_trailing_flags(tmp_path, cantor4):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"command": "dims", "space": str(cantor4), "out": str(tmp_path / "o")}))
    assert run("--config", cfg, "--mode", "greedy") == 0
    assert read_json(tmp_path / "o/dims.json")["mode"] == "greedy"
