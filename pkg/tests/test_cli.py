import csv
import json
import subprocess
import sys
from importlib.resources import files

import numpy as np
import pytest

from matspec.cli import run
from matspec.core import Coefficients

DATA = files("matspec") / "data"


def _run(*argv):
    return run([str(a) for a in argv])


def _load(path):
    return json.loads(path.read_text())


def test_forward_zero_problem(tmp_path):
    out = tmp_path / "spectra.json"
    assert _run("forward", "--problem", DATA / "zero_m2.json", "--bands", 5, "--weights", "--out", out) == 0
    art = _load(out)
    lam = np.array([b["lambda"] for b in art["bands"]])
    assert np.allclose(lam, (np.arange(5.0) ** 2)[:, None], atol=1e-8)
    assert len(art["config_hash"]) == 64 and "weights" in art
    man = _load(tmp_path / "spectra.json.manifest.json")
    assert man["config_hash"] == art["config_hash"] and "timings_s" in man


def test_roundtrip_report(tmp_path):
    out = tmp_path / "rt.json"
    assert _run("roundtrip", "--problem", DATA / "cos_m1.json", "--N", 10, "--out", out) == 0
    rep = _load(out)
    assert set(rep["errors"]) >= {"Q_L2", "h", "H"} and rep["errors"]["Q_L2"] < 0.5


def test_inverse_from_forward_artifact(tmp_path):
    spec = tmp_path / "s.json"
    _run("forward", "--problem", DATA / "zero_m2.json", "--N", 4, "--out", spec)
    out = tmp_path / "p.json"
    assert _run("inverse", "--spectra", spec, "--N", 4, "--grid", 40, "--dump-system", 0.5, "--out", out) == 0
    c = Coefficients.from_json(_load(out))
    assert np.max(np.abs(c.Q)) < 1e-8 and "system" in _load(out)


def test_malformed_json_exit_1_without_artifacts(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    out = tmp_path / "o.json"
    assert _run("forward", "--problem", bad, "--out", out) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 1 and err["kind"] == "parse"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["bad.json"]


def test_unknown_flag_exit_1(tmp_path):
    assert _run("forward", "--nonsense", "--out", tmp_path / "o.json") == 1


def test_validation_failure_exit_2(tmp_path, capsys):
    c = Coefficients.zero(2, 20).to_json()
    c["Q"][3][0][1] = [1.0, 0.0]      # breaks Hermitian symmetry
    p = tmp_path / "p.json"
    p.write_text(json.dumps(c))
    assert _run("forward", "--problem", p, "--out", tmp_path / "o.json") == 2
    assert json.loads(capsys.readouterr().err)["kind"] == "validation"
    assert _run("forward", "--problem", DATA / "zero_m2.json", "--N", 0, "--out", tmp_path / "o.json") == 2


def test_numerical_failure_exit_3(tmp_path, capsys):
    spec = tmp_path / "s.json"
    _run("forward", "--problem", DATA / "cos_m1.json", "--N", 6, "--out", spec)
    out = tmp_path / "p.json"
    assert _run("inverse", "--spectra", spec, "--N", 6, "--M", 20, "--cond-limit", 1.0001, "--out", out) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "IllConditioned"
    assert not out.exists()


def test_thread_count_does_not_change_artifacts(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["roundtrip", "--problem", DATA / "cos_m1.json", "--N", 8]
    assert _run(*args, "--threads", 1, "--out", a) == 0
    assert _run(*args, "--threads", 3, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seeded_generation_is_reproducible(tmp_path):
    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.json"
    assert _run("forward", "--random", 2, "--seed", 4, "--N", 3, "--out", a) == 0
    assert _run("forward", "--random", 2, "--seed", 4, "--N", 3, "--threads", 2, "--out", b) == 0
    assert _run("forward", "--random", 2, "--seed", 5, "--N", 3, "--out", c) == 0
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()


def test_sweep_csv(tmp_path):
    out = tmp_path / "sweep.csv"
    assert _run("sweep", "--problem", DATA / "cos_m1.json", "--ps", "3,6", "--N", 6, "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    rows = list(csv.DictReader(lines[1:]))
    assert [int(r["p"]) for r in rows] == [3, 6]
    assert float(rows[1]["error_Q"]) < float(rows[0]["error_Q"])


def test_stability_and_partition(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    _run("forward", "--problem", DATA / "cos_m1.json", "--N", 6, "--out", a)
    _run("forward", "--random", 1, "--seed", 2, "--N", 6, "--out", b)
    part = tmp_path / "part.json"
    assert _run("partition", "--spectra-a", a, "--spectra-b", b, "--out", part) == 0
    rep = tmp_path / "rep.json"
    assert _run("stability", "--spectra-a", a, "--spectra-b", b, "--partition", part,
                "--omega-bound", 5, "--eps", 0.1, "--out", rep) == 0
    r = _load(rep)
    assert r["Z"] > 0 and "membership" in r["spectra_a"]
    plain = tmp_path / "plain.json"
    plain.write_text(json.dumps([[[n, 1]] for n in range(1, 7)]))
    assert _run("stability", "--spectra-a", a, "--spectra-b", a, "--partition", plain, "--out", rep) == 0
    assert _load(rep)["Z"] == 0.0


def test_stability_ratio_mode(tmp_path):
    b = Coefficients.from_function(lambda x: np.cos(x) + 0.05 * np.cos(2 * x), 200)
    pb = tmp_path / "b.json"
    pb.write_text(json.dumps(b.to_json()))
    out = tmp_path / "r.json"
    assert _run("stability", "--problem-a", DATA / "cos_m1.json", "--problem-b", pb, "--N", 8, "--out", out) == 0
    assert _load(out)["stability_ratio"]["ratio"] > 0


def test_graph_commands(tmp_path):
    fwd, inv, rt = tmp_path / "g.json", tmp_path / "gi.json", tmp_path / "gr.json"
    assert _run("graph", "forward", "--edges", 3, "--problem", DATA / "graph_cos2x_m3.json", "--N", 4,
                "--out", fwd) == 0
    assert _run("graph", "inverse", "--edges", 3, "--spectra", fwd, "--N", 4, "--out", inv) == 0
    assert np.array(_load(inv)["q"]).shape == (3, 201)
    assert _run("graph", "roundtrip", "--edges", 2, "--N", 4, "--out", rt) == 0
    assert _load(rt)["errors"]["max_edge_L2"] < 1e-8
    assert _run("graph", "forward", "--edges", 2, "--problem", DATA / "graph_cos2x_m3.json",
                "--out", tmp_path / "x.json") == 2
    gs = tmp_path / "gs.json"
    assert _run("stability", "--graph", "--spectra-a", fwd, "--spectra-b", fwd, "--edge", 2,
                "--partition", "auto", "--gap", 1e-9, "--out", gs) == 0
    assert _load(gs)["Z"] == 0.0


def test_help_lists_every_command():
    res = subprocess.run([sys.executable, "-m", "matspec", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("forward", "inverse", "roundtrip", "stability", "partition", "sweep", "graph"):
        assert cmd in res.stdout
    res = subprocess.run([sys.executable, "-m", "matspec", "graph", "--help"], capture_output=True, text=True)
    assert "roundtrip" in res.stdout
