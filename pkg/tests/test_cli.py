from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from qgrowth.cli import main
from qgrowth.config import load_scenario, resolve_scenario
from qgrowth.operators import residual_P
from qgrowth.report import read_solutions_csv


def small(tmp_path, name: str, n: int = 64) -> str:
    text = resolve_scenario(name).read_text()
    lines = ["n = %d" % n if ln.strip().startswith("n =") else ln for ln in text.splitlines()]
    p = tmp_path / f"{name}.ini"
    p.write_text("\n".join(lines) + "\n")
    return str(p)


def run(*argv) -> int:
    return main([str(a) for a in argv])


def test_verify_suite(tmp_path, capsys):
    assert run("verify", "operators", "--out", tmp_path) == 0
    data = json.loads((tmp_path / "verify.json").read_text())
    assert data["passed"] and data["suites"][0]["name"] == "operators"
    assert "operators" in capsys.readouterr().out


def test_missing_mu1_exits_2_with_field_and_line(tmp_path, capsys):
    text = resolve_scenario("fig1-h-negative").read_text().replace("mu1 = 1\n", "")
    cfg = tmp_path / "bad.ini"
    cfg.write_text(text)
    assert run("branch", "--config", cfg, "--out", tmp_path / "o") == 2
    err = capsys.readouterr().err
    assert "[coefficients.mu1]" in err and "line " in err


def test_bad_seed(tmp_path):
    assert run("verify", "eigen", "--out", tmp_path, "--seed", "-1") == 2


def test_branch_outputs_are_deterministic_and_reload(tmp_path):
    cfg = small(tmp_path, "fig1-h-negative")
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert run("branch", "--config", cfg, "--out", o, "--seed", 7) == 0
    for f in ("branch.csv", "solutions.csv", "branch_upper.csv", "bounds.csv", "branch.svg",
              "branch.json"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f
    summary = json.loads((outs[0] / "branch.json").read_text())
    assert summary["folds"] == 0 and summary["lower_sheet"] == "decreasing"
    assert summary["upper"]["found"] == len(summary["upper"]["lambdas"])
    P = load_scenario(cfg).problem
    for lam, u in read_solutions_csv(outs[0] / "solutions.csv"):
        assert np.max(np.abs(residual_P(u, P.with_lam(lam)))) < 1e-7
    assert (outs[0] / "verification.log").exists()


def test_fold_branch(tmp_path):
    cfg = small(tmp_path, "fig2-h-positive")
    assert run("branch", "--config", cfg, "--out", tmp_path) == 0
    s = json.loads((tmp_path / "branch.json").read_text())
    assert s["folds"] == 1 and s["termination"] == "norm-cap" and s["lower_sheet"] == "increasing"
    flags = [ln.split(",")[7] for ln in (tmp_path / "branch.csv").read_text().splitlines()[1:]]
    assert flags.count("1") == 1


def test_solve_coercive(tmp_path):
    assert run("solve", "--config", small(tmp_path, "coercive"), "--out", tmp_path,
               "--threads", 2) == 0
    s = json.loads((tmp_path / "solve.json").read_text())
    assert s["distinct_solutions"] == 1 and s["max_pairwise_difference"] < 1e-8


def test_eigen_command(tmp_path):
    assert run("eigen", "--config", small(tmp_path, "eigen-1d", 128), "--out", tmp_path) == 0
    s = json.loads((tmp_path / "eigen.json").read_text())
    assert abs(s["lambda1_extrapolated"] - np.pi**2) < 1e-5 and s["phi_positive"]


def test_homotopy_command(tmp_path):
    assert run("homotopy-k", "--config", small(tmp_path, "fig2-h-positive"), "--out", tmp_path) == 0
    s = json.loads((tmp_path / "homotopy.json").read_text())
    assert 0 < s["k_fold"] < 1 and s["converged_at_k_max"] == 0


def test_oracle_command(tmp_path):
    assert run("oracle-compare", "--config", small(tmp_path, "fig2-h-positive"),
               "--out", tmp_path) == 0
    s = json.loads((tmp_path / "oracle.json").read_text())
    assert s["agree"] and s["fold"]["agree"]


def test_oracle_rejects_disk(tmp_path, capsys):
    assert run("oracle-compare", "--config", "disk-anisotropic", "--out", tmp_path) == 2
    assert "grid.domain" in capsys.readouterr().err


def test_tolerance_precedence(tmp_path, monkeypatch):
    cfg = small(tmp_path, "coercive", 32)
    monkeypatch.setenv("QGROWTH_TOL", "1e-9")
    assert run("solve", "--config", cfg, "--out", tmp_path / "env") == 0
    assert "tol 1e-09" in (tmp_path / "env" / "verification.log").read_text()
    assert run("solve", "--config", cfg, "--out", tmp_path / "flag", "--tol", "1e-10") == 0
    assert "tol 1e-10" in (tmp_path / "flag" / "verification.log").read_text()


@pytest.mark.parametrize("args", [["--version"], ["verify", "--help"]])
def test_module_entry_point(args):
    r = subprocess.run([sys.executable, "-m", "qgrowth.cli", *args], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout
