import io
import json

import pytest

from jetconvex.cli import main

PARABOLA = {"version": 1, "dim": 1, "points": [
    {"x": [-1], "f": 1, "g": [-2]}, {"x": [0], "f": 0, "g": [0]}, {"x": [1], "f": 1, "g": [2]}]}
CW1 = {"version": 1, "dim": 1, "points": [{"x": [0], "f": 0, "g": [1]}, {"x": [1], "f": 1, "g": [2]}]}
NEG = {"version": 1, "dim": 1, "points": [{"x": [0], "f": 0, "g": [1]}, {"x": [1], "f": 0, "g": [0]}]}
SINGLE = {"version": 1, "dim": 2, "points": [{"x": [0, 0], "f": 3, "g": [1, -1]}]}


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out)
    return code, out.getvalue()


@pytest.fixture
def files(tmp_path):
    paths = {}
    for name, doc in [("parabola", PARABOLA), ("cw1", CW1), ("neg", NEG), ("single", SINGLE)]:
        p = tmp_path / (name + ".json")
        p.write_text(json.dumps(doc))
        paths[name] = p
    paths["dir"] = tmp_path
    return paths


def test_validate_codes(files, tmp_path):
    assert run("validate", files["parabola"])[0] == 0
    code, out = run("validate", files["cw1"])
    assert code == 3
    assert json.loads(out)["violations"][0]["pair"] == [1, 0]
    code, out = run("validate", files["neg"])
    assert code == 2
    viol = [v for v in json.loads(out)["violations"] if v["kind"] == "C"]
    assert viol == [{"kind": "C", "pair": [1, 0], "magnitude": -1.0}]
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1, "dim": 1, "poi')
    assert run("validate", bad)[0] == 1
    assert run("validate", tmp_path / "missing.json")[0] == 1


def test_usage_errors_exit_one(files):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_build_and_eval(files):
    model = files["dir"] / "m.json"
    code, out = run("build", files["parabola"], "-o", model)
    assert code == 0 and json.loads(out)["degenerate"] is False
    q = files["dir"] / "q.csv"
    q.write_text("x0\n0\n1\n0.5\n9\n")
    code, out = run("eval", model, q, "--grad")
    lines = out.splitlines()
    assert lines[0] == "x0,lower,upper,grad0,status"
    assert lines[1].startswith("0,0,0,") and lines[1].endswith(",ok")
    assert lines[2].startswith("1,1,1,")
    assert lines[4] == "9,,,,outside-domain"
    shared = [float(r.split(",")[2]) for r in run("eval", model, q)[1].splitlines()[1:4]]
    refined = [float(r.split(",")[2]) for r in run("eval", model, q, "--mode", "refined")[1].splitlines()[1:4]]
    assert all(r <= s for r, s in zip(refined, shared))


def test_build_single_point_is_degenerate(files):
    code, out = run("build", files["single"], "-o", files["dir"] / "s.json")
    assert code == 0 and json.loads(out)["degenerate"] is True


def test_build_refuses_invalid_unless_forced(files):
    out_path = files["dir"] / "f.json"
    assert run("build", files["cw1"], "-o", out_path)[0] == 3
    assert not out_path.exists()
    code, out = run("build", files["cw1"], "-o", out_path, "--force")
    assert code == 0
    assert json.loads(out_path.read_text())["config"]["forced"] is True


def test_build_box_errors(files):
    assert run("build", files["parabola"], "-o", files["dir"] / "b.json", "--box=-0.5:0.5")[0] == 1
    assert run("build", files["parabola"], "-o", files["dir"] / "b.json", "--box=oops")[0] == 1
    assert run("build", files["parabola"], "-o", files["dir"] / "b.json", "--box=-2:2")[0] == 0


def test_check(files):
    model = files["dir"] / "m.json"
    run("build", files["parabola"], "-o", model)
    code, out = run("check", model, "--samples", "300")
    reports = json.loads(out)
    assert code == 0
    assert {"name", "samples", "worst", "threshold", "passed"} <= set(reports[0])
    assert run("check", model, "--suite", "nope")[0] == 1
    code, out = run("check", model, "--suite", "interpolation")
    assert code == 0 and [r["name"] for r in json.loads(out)] == ["interpolation"]


def test_modulus_table(files):
    code, out = run("modulus", files["parabola"], "--tmin", "1", "--tmax", "4", "--steps", "4")
    rows = out.splitlines()
    assert code == 0
    assert rows[0] == "t,omega0,envelope,omegahat,phihat"
    t, w0, env, wh, ph = map(float, rows[2].split(","))
    assert (t, w0) == (2.0, 2.0)
    assert env == pytest.approx(2.0, abs=1e-9) and wh == pytest.approx(2.0, abs=1e-9)
    code, out = run("modulus", files["single"], "--steps", "3")
    assert all(set(r.split(",")[1:]) == {"0"} for r in out.splitlines()[1:])
    assert run("modulus", files["parabola"], "--steps", "0")[0] == 1


def test_seed_from_environment(files, monkeypatch):
    a, b, c = (files["dir"] / n for n in ("a.json", "b.json", "c.json"))
    run("build", files["parabola"], "-o", a, "--seed", "5")
    monkeypatch.setenv("JETCONVEX_SEED", "5")
    run("build", files["parabola"], "-o", b)
    run("build", files["parabola"], "-o", c, "--seed", "0")
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()
