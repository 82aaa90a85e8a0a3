import json
import subprocess
import sys
from pathlib import Path

import pytest

from bubblepot import cli

DATA = Path(__file__).resolve().parents[1] / "data"


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, (json.loads(out.out) if out.out.strip() else None), out.err


@pytest.mark.parametrize("name,label", [("halfspace", "HalfSpaceLike"), ("ellipse", "EllipsoidOrCylinder"),
                                        ("strip", "EllipsoidOrCylinder"), ("paraboloid", "ConvexEpigraphLike"),
                                        ("square", "NotQuadratic")])
def test_classify_labels(capsys, name, label):
    code, doc, _ = run(capsys, "classify", "--domain", DATA / f"{name}.json")
    assert code == 0
    assert doc["schema"] == "bubblepot.run.v1" and doc["command"] == "classify"
    assert doc["result"]["label"] == label


def test_potential_examples(capsys):
    code, doc, _ = run(capsys, "potential", "--domain", DATA / "disk.json", "--x", "0,0")
    assert code == 0 and doc["result"]["value"] == pytest.approx(0.25, abs=1e-9)
    code, doc, _ = run(capsys, "potential", "--domain", DATA / "disk.json", "--x", "2,0", "--alpha", "3,0")
    assert doc["result"]["value"] == pytest.approx(-0.125, abs=1e-9)
    code, doc, _ = run(capsys, "potential", "--domain", DATA / "strip.json", "--x", "0.3,0.2", "--alpha", "1,2")
    assert code == 0 and abs(doc["result"]["value"]) <= 1e-6


def test_potential_input_errors(capsys):
    assert run(capsys, "potential", "--domain", DATA / "strip.json", "--x", "0,0")[0] == cli.EXIT_INPUT
    assert run(capsys, "potential", "--domain", DATA / "disk.json", "--x", "0,0,0")[0] == cli.EXIT_INPUT
    assert run(capsys, "potential", "--domain", DATA / "disk.json", "--x", "1,0", "--alpha", "3,0")[0] \
        == cli.EXIT_INPUT
    assert run(capsys, "potential", "--domain", DATA / "missing.json", "--x", "0,0")[0] == cli.EXIT_INPUT
    assert run(capsys, "potential", "--x", "0,0")[0] == cli.EXIT_INPUT


def test_nullquad_command(capsys):
    code, doc, _ = run(capsys, "nullquad-test", "--domain", DATA / "disk.json", "--centers", "0.3,0.2;0,0")
    assert code == 0 and doc["result"]["passed"]
    code, doc, _ = run(capsys, "nullquad-test", "--domain", DATA / "square.json", "--centers", "0.3,0.2")
    assert code == cli.EXIT_FAILED and not doc["result"]["passed"]
    assert run(capsys, "nullquad-test", "--domain", DATA / "disk.json", "--centers", "3,0")[0] == cli.EXIT_INPUT


def test_verify_ellipse_passes_and_writes_csv(capsys, tmp_path):
    csv_path = tmp_path / "report.csv"
    code, doc, err = run(capsys, "verify", "--family", "ellipsoid", "--semiaxes", "2,1", "--t", "0,0.5,1",
                         "--csv", csv_path)
    assert code == 0 and doc["result"]["passed"]
    assert csv_path.read_text().startswith("condition,t,sample,residual\n")
    assert "1c" in err


def test_verify_paraboloid_flags_relaxed_tolerances(capsys):
    code, doc, err = run(capsys, "verify", "--family", "paraboloid", "--semiaxes", "1", "--t", "0,1")
    assert code == 0
    assert doc["result"]["metadata"]["relaxed_tolerances"] is True
    assert "relaxed" in err


def test_verify_input_errors(capsys):
    code, doc, err = run(capsys, "verify", "--semiaxes", "-1")
    assert code == cli.EXIT_INPUT and doc is None and "semiaxes" in err
    assert run(capsys, "verify", "--t", "5")[0] == cli.EXIT_INPUT
    assert run(capsys, "verify", "--family", "cylinder", "--semiaxes", "1")[0] == cli.EXIT_INPUT
    assert run(capsys, "verify", "--semiaxes", "a,b")[0] == cli.EXIT_INPUT


def test_verify_failure_exit_code(capsys, tmp_path, monkeypatch):
    orig = cli.ev.verify_formulation
    monkeypatch.setattr(cli.ev, "verify_formulation",
                        lambda *a, **k: orig(*a, **{**k, "tolerances": {"1b": 1e-30}}))
    code, doc, _ = run(capsys, "verify", "--t", "0.5")
    assert code == cli.EXIT_FAILED and doc["result"]["passed"] is False


def test_nonconvergence_exit_code(capsys, monkeypatch):
    def stuck(*a, **k):
        raise cli.quad.NonConvergenceError("budget exhausted", 0.0, 1.0)
    monkeypatch.setattr(cli.nq, "classify", stuck)
    code, doc, err = run(capsys, "classify", "--domain", DATA / "disk.json")
    assert code == cli.EXIT_NONCONVERGENCE and "nonconvergence" in err


def test_decay_check_command(capsys):
    code, doc, _ = run(capsys, "decay-check")
    assert code == 0 and doc["result"]["slope"] <= -2.9
    code, doc, _ = run(capsys, "decay-check", "--bump-center", "0,0,0", "--alpha", "1,1,1", "--beta", "0,0,1")
    assert code == 0 and doc["result"]["bound"] == pytest.approx(-4.9)
    assert run(capsys, "decay-check", "--radii", "4,8,16")[0] == cli.EXIT_INPUT


def test_moments_command(capsys):
    code, doc, _ = run(capsys, "moments", "--t", "0.5", "--bump-center", "4.5,1", "--bump-radius", "0.5",
                       "--alpha", "2,1")
    assert code == 0 and doc["result"]["rows"][0]["rel_err"] <= 1e-3
    code, doc, _ = run(capsys, "moments", "--invariance", "--t", "0,1,2", "--bump-radius", "0.4")
    assert code == 0 and doc["result"]["passed"]
    assert run(capsys, "moments", "--t", "0.5", "--bump-center", "2.2,0", "--bump-radius", "0.5")[0] \
        == cli.EXIT_INPUT


def test_config_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"semiaxes": "3,1", "t": "0", "boundary": 8}))
    code, doc, _ = run(capsys, "verify", "--config", cfg, "--t", "0.5")
    c = doc["config"]
    assert c["semiaxes"] == "3,1" and c["t"] == "0.5" and c["boundary"] == 8 and c["dt"] == cli.DEFAULTS["dt"]
    assert doc["result"]["metadata"]["family"]["semiaxes"] == [3.0, 1.0]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"semiaxis": "3,1"}))
    assert run(capsys, "verify", "--config", bad)[0] == cli.EXIT_INPUT


def test_config_can_name_the_domain(capsys, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"domain": str(DATA / "disk.json"), "x": "0,0"}))
    code, doc, _ = run(capsys, "potential", "--config", cfg)
    assert code == 0 and doc["result"]["value"] == pytest.approx(0.25, abs=1e-9)


def test_every_default_is_echoed(capsys):
    _, doc, _ = run(capsys, "decay-check")
    assert set(cli.DEFAULTS) <= set(doc["config"])


def test_output_round_trips(capsys):
    code = cli.main(["verify", "--t", "0.5"])
    text = capsys.readouterr().out
    doc = json.loads(text)
    assert json.dumps(doc, indent=1) + "\n" == text


def test_verify_output_is_byte_identical():
    cmd = [sys.executable, "-m", "bubblepot.cli", "verify", "--family", "ellipsoid", "--semiaxes", "2,1",
           "--t", "0,0.5,1"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True, env={**__import__("os").environ,
                                                                  "BUBBLEPOT_THREADS": "3"}).stdout
    assert a == b and len(a) > 1000
