"""Tests for the command-line front end."""

import json
import math

import pandas as pd
import pytest

from pwavg.cli import main
from pwavg.core.builtin_models import proposition1_polar_document


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def polar_file(workdir):
    path = workdir / "polar.json"
    path.write_text(json.dumps(proposition1_polar_document()))
    return path


def _run(*argv):
    return main(["--set", "logging.file=null", *map(str, argv)])


def _codes(err):
    records = [json.loads(line) for line in err.splitlines() if line.strip()]
    return [r["record"]["extra"].get("code") for r in records]


class TestBuiltinAndValidate:
    """Test model emission and validation."""

    def test_builtin_to_stdout(self, workdir, capsys):
        assert _run("builtin", "--name", "proposition1-polar") == 0
        document = json.loads(capsys.readouterr().out)
        assert document["dimension"] == 2
        assert document["manifold"]["beta0"] == ["0"]

    def test_builtin_then_validate(self, workdir, capsys):
        assert _run("builtin", "--name", "proposition1", "--coeffs", "a2m=2", "--out", "m.json") == 0
        assert json.loads((workdir / "m.json").read_text())["parameters"]["a2m"] == 2.0
        assert _run("validate", "m.json") == 0
        assert "OK" in capsys.readouterr().out

    def test_unknown_builtin(self, workdir, capsys):
        assert _run("builtin", "--name", "nope") == 64
        assert "usage" in _codes(capsys.readouterr().err)

    def test_bad_coefficients(self, workdir, capsys):
        assert _run("builtin", "--name", "proposition1", "--coeffs", "zz=1") == 64

    def test_duplicate_signature(self, workdir, capsys):
        path = workdir / "dup.json"
        path.write_text(json.dumps({
            "dimension": 1, "period": 1.0, "surfaces": ["x1"],
            "zones": [{"signature": [1], "F0": ["1"]}, {"signature": [1], "F0": ["2"]}],
        }))
        assert _run("validate", path) == 1
        assert "zone.duplicate_signature" in _codes(capsys.readouterr().err)

    def test_syntax_error(self, workdir, capsys):
        path = workdir / "bad.json"
        path.write_text(json.dumps({
            "dimension": 1, "period": 1.0, "surfaces": ["sin("],
            "zones": [{"signature": [1], "F0": ["1"]}, {"signature": [-1], "F0": ["1"]}],
        }))
        assert _run("validate", path) == 1
        assert "expr.syntax" in _codes(capsys.readouterr().err)

    def test_missing_model(self, workdir, capsys):
        assert _run("validate", "absent.json") == 1
        assert "io.not_found" in _codes(capsys.readouterr().err)

    def test_bad_override(self, workdir, capsys):
        assert main(["--set", "integrator.rtol=-1", "validate", "absent.json"]) == 64


class TestIntegrate:
    """Test the integrate command."""

    def test_writes_trajectory_and_events(self, polar_file, workdir, capsys):
        assert _run("integrate", polar_file, "--z", "0.5,0") == 0
        events = pd.read_csv(workdir / "results" / "events.csv")
        assert list(events["kind"]) == ["crossing", "crossing"]
        assert events["t"].iloc[0] == pytest.approx(math.pi, abs=1e-10)
        report = json.loads((workdir / "results" / "integrate.json").read_text())
        assert report["command"] == "integrate"
        assert len(report["model_sha256"]) == 64
        assert report["final_state"] == pytest.approx([0.5, 0.0], abs=1e-12)
        trajectory = pd.read_csv(workdir / "results" / "trajectory.csv")
        assert list(trajectory.columns) == ["t", "x1", "x2", "zone_id"]

    def test_sliding_is_a_runtime_failure(self, workdir, capsys, sliding_document):
        path = workdir / "slide.json"
        path.write_text(json.dumps(sliding_document))
        assert _run("integrate", path, "--z", "0.5") == 2
        assert "flow.sliding" in _codes(capsys.readouterr().err)

    def test_csv_only(self, polar_file, workdir):
        assert _run("--set", "output.formats=[csv]", "integrate", polar_file, "--z", "0.5,0") == 0
        assert (workdir / "results" / "events.csv").exists()
        assert not (workdir / "results" / "integrate.json").exists()

    def test_output_directory(self, polar_file, workdir):
        assert _run("--out", "elsewhere", "integrate", polar_file, "--z", "0.5,0", "--tf", "1.0") == 0
        assert (workdir / "elsewhere" / "trajectory.csv").exists()


class TestAnalysisCommands:
    """Test avgfn, find and verify."""

    def test_avgfn(self, polar_file, workdir):
        assert _run("avgfn", polar_file, "--grid", "5") == 0
        frame = pd.read_csv(workdir / "results" / "f1.csv")
        assert len(frame) == 5
        assert frame["f1_1"].to_numpy() == pytest.approx(2 * math.pi * frame["a1"].to_numpy() - 2, abs=1e-8)
        report = json.loads((workdir / "results" / "hypotheses.json").read_text())
        assert report["summary"]["h_pass"] and report["summary"]["h2_pass"] and report["summary"]["h3_pass"]

    def test_find(self, polar_file, workdir, capsys):
        assert _run("find", polar_file, "--grid", "12") == 0
        report = json.loads((workdir / "results" / "candidates.json").read_text())
        assert report["certificate"] == "PASS"
        assert report["degree"]["degree"] == 1
        assert len(report["candidates"]) == 1
        assert report["candidates"][0]["a"][0] == pytest.approx(1 / math.pi, abs=1e-9)
        assert report["candidates"][0]["local_degree"] == 1
        assert "PASS" in capsys.readouterr().out

    def test_avgfn_needs_manifold(self, workdir, capsys):
        assert _run("builtin", "--name", "proposition1", "--out", "cart.json") == 0
        assert _run("avgfn", "cart.json") == 1
        assert "model.no_manifold" in _codes(capsys.readouterr().err)

    def test_verify_rejects_eps_list(self, polar_file, workdir, capsys):
        assert _run("verify", polar_file, "--eps-list", "1e-2,1e-1") == 64
        assert "usage" in _codes(capsys.readouterr().err)

    def test_verify(self, polar_file, workdir):
        assert _run("verify", polar_file, "--eps-list", "1e-2,1e-3", "--grid", "12") == 0
        table = pd.read_csv(workdir / "results" / "convergence.csv")
        assert list(table["eps"]) == [1e-2, 1e-3]
        assert table["converged"].all()
        report = json.loads((workdir / "results" / "convergence.json").read_text())
        assert report["z_a"][0] == pytest.approx(1 / math.pi, abs=1e-9)
        assert (workdir / "results" / "orbit.csv").exists()
