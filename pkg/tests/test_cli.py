from __future__ import annotations

import os
import subprocess
import sys
import time

import pytest

from suplab.cli import bundled_scenarios, main

TINY = """
grid.n_cells = 600
time.T = 0.1
time.dt = 1e-3
init.var = 0.25
sde.N = 4000
sde.dt = 1e-3
sde.seed = 123
checks.times = 0, 0.05, 0.1
"""


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.scenario"
    p.write_text(TINY)
    return p


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out.split()
    assert {"heat", "porous", "ou", "degenerate"} <= set(out) == set(bundled_scenarios())


def test_unknown_key_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.scenario"
    p.write_text("grid.bogus = 3\n")
    assert main(["validate", str(p), str(tmp_path / "o")]) == 2
    assert "grid.bogus" in capsys.readouterr().err


def test_missing_scenario_exit_2(tmp_path):
    assert main(["validate", str(tmp_path / "nope.scenario"), str(tmp_path / "o")]) == 2


def test_cfl_violation_names_dt(tmp_path, capsys):
    p = tmp_path / "cfl.scenario"
    p.write_text(TINY + "time.theta = 0\n")
    assert main(["solve-fpe", str(p), str(tmp_path / "o")]) == 2
    assert "time.dt" in capsys.readouterr().err


def test_degenerate_rejected_unless_allowed(tmp_path, capsys):
    assert main(["validate", "degenerate", str(tmp_path / "a")]) == 2
    err = capsys.readouterr().err
    assert "coeffs.model" in err and "T1" in err
    p = tmp_path / "deg.scenario"
    p.write_text((tmp_path / "a" / "effective.scenario").read_text().replace(
        "coeffs.allow_degenerate = false", "coeffs.allow_degenerate = true"))
    assert main(["validate", str(p), str(tmp_path / "b")]) == 0
    assert "degenerate, allowed by override" in (tmp_path / "b" / "report.txt").read_text()


def test_solve_fpe_report(tiny, tmp_path, capsys):
    assert main(["solve-fpe", str(tiny), str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "mass T=0.1 PASS" in out and "exact_l1 T=0.1 PASS" in out
    assert (tmp_path / "o" / "fpe.csv").exists()
    for line in out.splitlines():
        if not line.startswith("#"):
            assert line.endswith("seed=123")


def test_superposition_heat(tmp_path, capsys):
    assert main(["superposition", "heat", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "superposition t=0.5 PASS" in out
    assert "mismatch_control t=0.5 PASS" in out


def test_effective_scenario_reproduces_outputs(tiny, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", str(tiny), str(a)]) == 0
    assert main(["simulate", str(a / "effective.scenario"), str(b)]) == 0
    assert (a / "effective.scenario").read_bytes() == (b / "effective.scenario").read_bytes()
    assert (a / "particles.csv").read_bytes() == (b / "particles.csv").read_bytes()


def test_thread_count_does_not_change_bytes(tmp_path):
    tiny = tmp_path / "wide.scenario"
    tiny.write_text(TINY.replace("sde.N = 4000", "sde.N = 50000"))
    outs = []
    for n in ("1", "4"):
        env = dict(os.environ, SUPLAB_THREADS=n)
        out = tmp_path / f"t{n}"
        r = subprocess.run([sys.executable, "-m", "suplab.cli", "simulate", str(tiny), str(out)],
                           env=env, capture_output=True, text=True, timeout=600)
        assert r.returncode == 0, r.stderr
        outs.append((out / "particles.csv").read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.slow
def test_all_porous_within_budget(tmp_path):
    t0 = time.perf_counter()
    assert main(["all", "porous", str(tmp_path / "o")]) == 0
    assert time.perf_counter() - t0 <= 15 * 60
    report = (tmp_path / "o" / "report.txt").read_text()
    assert "FAIL" not in report and "energy_refinement levels=3 PASS" in report
