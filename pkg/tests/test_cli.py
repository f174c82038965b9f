import json
import subprocess
import sys
from pathlib import Path

import pytest

from dbartau import cli
from dbartau.config import ConfigError, apply_overrides, config_hash, parse_complex

SCEN = Path(__file__).resolve().parents[1] / "scenarios"


def _run(tmp_path, command, name, *overrides):
    return cli.run(command, SCEN / name, list(overrides), tmp_path)


def _report(rep):
    return json.loads((Path(rep["output_dir"]) / "report.json").read_text())


def test_solve_dbar_zero(tmp_path):
    code, rep = _run(tmp_path, "solve-dbar", "zero.json")
    assert code == 0
    on_disk = _report(rep)
    assert on_disk["values"]["det_residual"] == 0
    assert on_disk["config_hash"] == config_hash(on_disk["config"])
    assert on_disk["backend"] in ("compiled", "python")
    assert on_disk["grid"] == {"radial": 12, "angular": 24, "domain": on_disk["grid"]["domain"]}
    assert (Path(rep["output_dir"]) / "gamma_nodes.csv").exists()


def test_solver_failure_exit_code(tmp_path):
    code, rep = _run(tmp_path, "solve-dbar", "two_disk.json", "tolerances.rcond_min=2", "grid.radial=6",
                     "grid.angular=12")
    assert code == cli.EXIT_SOLVER
    assert "rcond" in rep["error"]


@pytest.mark.parametrize("overrides", [
    ["grid.radial=500"],
    ["field.kind=\"mystery\""],
    ["domain.radius=-1"],
    ["tolerances.unimodularity=0"],
])
def test_config_errors(tmp_path, overrides):
    assert _run(tmp_path, "solve-dbar", "zero.json", *overrides)[0] == cli.EXIT_CONFIG


def test_missing_file(tmp_path):
    assert cli.run("solve-dbar", tmp_path / "nope.json", out_dir=tmp_path)[0] == cli.EXIT_CONFIG


def test_det2_needs_pair(tmp_path):
    assert _run(tmp_path, "det2", "zero.json")[0] == cli.EXIT_CONFIG


def test_det2_two_disk(tmp_path):
    code, rep = _run(tmp_path, "det2", "two_disk.json", "grid.radial=8", "grid.angular=16")
    assert code == 0
    assert rep["values"]["series_vs_eigen"] <= 1e-10


def test_broken_schwarz_flagged(tmp_path):
    code, rep = _run(tmp_path, "nls-verify", "nls_broken.json")
    assert code == cli.EXIT_TOL
    bad = [c for c in rep["checks"] if not c["passed"]]
    assert [c["name"] for c in bad] == ["schwarz"]


def test_kp_residual_slope(tmp_path):
    code, rep = _run(tmp_path, "kp-residual", "two_disk.json", "grid.radial=10", "grid.angular=20")
    assert code == 0
    assert abs(rep["values"]["slope"] - 2.0) <= 0.3


def test_miwa_check(tmp_path):
    code, rep = _run(tmp_path, "miwa-check", "two_disk.json", "grid.radial=10", "grid.angular=20")
    assert code == 0, rep["checks"]


def test_nls_solve_table(tmp_path):
    code, rep = _run(tmp_path, "nls-solve", "nls_disk.json", "x_range=[0.0,0.3,2]", "t_range=0.1",
                     "grid.radial=10", "grid.angular=20")
    assert code == 0
    lines = (Path(rep["output_dir"]) / "psi.csv").read_text().splitlines()
    assert lines[0] == "x,t,psi_re,psi_im,abs_psi,a_re,a_im"
    assert len(lines) == 3


def test_main_entry(tmp_path):
    code = cli.main(["solve-dbar", str(SCEN / "zero.json"), "--out", str(tmp_path), "--quiet",
                     "--set", "grid.radial=4"])
    assert code == 0
    assert (tmp_path / "zero-field" / "solve-dbar" / "report.json").exists()


def test_module_invocation(tmp_path):
    r = subprocess.run([sys.executable, "-m", "dbartau.cli", "solve-dbar", str(SCEN / "zero.json"),
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0
    assert "exit 0" in r.stdout


def test_yaml_config(tmp_path):
    pytest.importorskip("yaml")
    cfg = tmp_path / "z.yaml"
    cfg.write_text("name: y\ndomain: {kind: disk, center: [0, 1], radius: 0.5}\ngrid: {radial: 4, angular: 8}\n")
    assert cli.run("solve-dbar", cfg, out_dir=tmp_path)[0] == 0


def test_override_parsing():
    cfg = apply_overrides({"a": {"b": 1}}, ["a.b=2", "a.c=[1, 2]", "d=text"])
    assert cfg == {"a": {"b": 2, "c": [1, 2]}, "d": "text"}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])
    with pytest.raises(ConfigError):
        apply_overrides({"a": 1}, ["a.b=1"])


def test_complex_parsing():
    assert parse_complex([1, 2]) == 1 + 2j
    assert parse_complex({"re": 0.5}) == 0.5
    assert parse_complex("1+2i") == 1 + 2j
    with pytest.raises(ConfigError):
        parse_complex("abc")
