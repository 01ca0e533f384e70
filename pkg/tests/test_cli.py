import json
import subprocess
import sys

import numpy as np
import pytest

from dirac_vacuum.cli import OUT_ENV, run_command
from dirac_vacuum.fields import load_potential


def test_scheme_json(capsys):
    assert run_command(["scheme", "--masses", "1,2,3"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["c1"] == pytest.approx(-1.6) and data["c2"] == pytest.approx(0.6)
    assert data["cutoff"] == pytest.approx(1.56810, abs=1e-5)


def test_kernel_csv(tmp_path, capsys):
    assert run_command(["kernel", "--points", "5", "--kmax", "4", "--out-dir", str(tmp_path)]) == 0
    rows = (tmp_path / "kernel.csv").read_text().splitlines()
    assert rows[0] == "k,M,U,gap" and len(rows) == 6
    m = [float(r.split(",")[1]) for r in rows[1:]]
    assert m[0] == pytest.approx(0.095465, abs=1e-6)
    assert all(b <= a for a, b in zip(m, m[1:]))
    meta = json.loads((tmp_path / "kernel.json").read_text())
    assert (meta["scheme"]["m0"], meta["scheme"]["m1"], meta["scheme"]["m2"]) == (1.0, 2.0, 3.0)


def test_uehling_csv(tmp_path):
    assert run_command(["uehling", "--points", "3", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "uehling.csv").read_text().startswith("k,U,gap\n")


@pytest.mark.parametrize("argv", [
    ["scheme", "--masses", "1,2"],
    ["scheme", "--masses", "3,2,1"],
    ["kernel", "--points", "1"],
    ["solve-linear", "--n", "1"],
    ["solve-sc", "--damping", "2"],
    ["nonsense"],
])
def test_invalid_arguments_exit_2(argv, capsys, tmp_path):
    assert run_command(argv + ["--out-dir", str(tmp_path)] if argv[0] != "nonsense" else argv) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"massez": [1, 2, 3]}))
    assert run_command(["scheme", "--config", str(cfg)]) == 2


def test_precedence_flags_env_config(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"out_dir": str(tmp_path / "from_config"), "points": 3}))
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "from_env"))
    assert run_command(["kernel", "--config", str(cfg)]) == 0
    assert (tmp_path / "from_env" / "kernel.csv").exists()
    assert run_command(["kernel", "--config", str(cfg), "--out-dir", str(tmp_path / "from_flag")]) == 0
    assert (tmp_path / "from_flag" / "kernel.csv").exists()
    monkeypatch.delenv(OUT_ENV)
    assert run_command(["kernel", "--config", str(cfg)]) == 0
    assert (tmp_path / "from_config" / "kernel.csv").exists()


def test_solve_linear_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run_command(["solve-linear", "--n", "4", "--box", "4", "--out-dir", str(tmp_path / name)]) == 0
    pa = load_potential(tmp_path / "a" / "linear")
    pb = load_potential(tmp_path / "b" / "linear")
    assert np.array_equal(pa.v.values, pb.v.values)
    report = json.loads((tmp_path / "a" / "linear_report.json").read_text())
    assert report["sobolev_norm"] > 0
    assert (tmp_path / "a" / "linear_v_slice.csv").exists()


def test_solve_sc_small(tmp_path):
    argv = ["solve-sc", "--n", "4", "--box", "4", "--charge", "0.05", "--damping", "1", "--init", "linear",
            "--threads", "1", "--out-dir", str(tmp_path)]
    assert run_command(argv) == 0
    report = json.loads((tmp_path / "solve_report.json").read_text())
    assert report["status"] == "converged"
    assert report["residual_history"][-1] <= 1e-8
    assert report["run_config"]["source"]["charge"] == 0.05


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dirac_vacuum", "scheme"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["m2"] == 3.0


def test_verify_quick(tmp_path, capsys):
    assert run_command(["verify", "--quick", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "12/12 checks passed" in out
    report = json.loads((tmp_path / "verify_quick.json").read_text())
    assert all(r["passed"] for r in report["results"])
