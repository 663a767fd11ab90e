"""Acceptance gate: criteria 1-10, one PASS/FAIL line each.

Every criterion is run at its stated tolerance; the verdict lines are
printed as the tests run and again in the pytest terminal summary.
"""

from __future__ import annotations

import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from gate import Criterion
from suplab.core.coefficients import (Constant, OrnsteinUhlenbeck, PorousMedia, Tabulated,
                                      TimeDependent, linearize)
from suplab.core.grid import DensityTrajectory, gaussian_density, make_grid
from suplab.core.jump_kernel import JumpKernel
from suplab.core.laws import GaussianLaw, UniformLaw
from suplab.core.metrics import l1_distance
from suplab.core.particles import ParticleEnsemble
from suplab.core.rng import RngStream
from suplab.fpe import (SchemeConfig, solve_backward_kolmogorov, solve_linear_fpe,
                        solve_porous_media)
from suplab.jumps import check_jump_compensator, check_resolvent_identity, simulate_jump_process
from suplab.jumps import verify_jump_fpe_marginals
from suplab.potential import (LyapunovSpec, capacity_samples, check_generator_bound,
                              check_supermartingale, estimate_hitting_solution,
                              estimate_tail_bound, hunt_capacity_gaussian, verify_representation)
from suplab.sde import SimConfig, simulate_linearized
from suplab.verify import (check_flow_property, check_superposition, gaussian_energy,
                           heat_energy, refinement_series, sqrt_energy)

pytestmark = pytest.mark.slow

HEAT = Constant(1.0, 0.0)
OU = OrnsteinUhlenbeck()
N_PART = 100_000


def _gate(c: Criterion):
    c.finish()
    assert c.passed, c.parts


# ---------------------------------------------------------------- 1


def test_criterion_1_heat_kernel_exactness():
    c = Criterion(1, "heat-kernel exactness")
    g = make_grid(-6, 6, 2400)
    u0 = gaussian_density(g, 0.0, 0.25)
    t0 = time.perf_counter()
    tr = solve_linear_fpe(u0, HEAT, 0.5, SchemeConfig(1e-5))
    wall = time.perf_counter() - t0
    c.check("l1 vs N(0,0.75)", l1_distance(tr.final, gaussian_density(g, 0, 0.75)) <= 1e-2,
            l1_distance(tr.final, gaussian_density(g, 0, 0.75)), 1e-2)
    c.check("runtime_s", wall <= 60.0, wall, 60.0)
    c.note("the finite-volume solver is single-threaded numpy/scipy code")
    _gate(c)


# ---------------------------------------------------------------- 2


def _coarsen(u: np.ndarray) -> np.ndarray:
    # cell averages onto the grid with half as many cells
    return 0.5 * (u[0::2] + u[1::2])


def test_criterion_2_ou_stationarity():
    c = Criterion(2, "OU stationarity")
    law = GaussianLaw(0.0, 0.25)
    g = make_grid(-6, 6, 1200)
    tr = solve_linear_fpe(law.density(g), OU, 6.0, SchemeConfig(1e-4))
    e = l1_distance(tr.final, gaussian_density(g, 0.0, 0.5))
    c.check("l1 vs N(0,0.5) at T=6", e <= 1e-2, e, 1e-2)
    finals = []
    for n, dt in ((600, 4e-3), (1200, 2e-3), (2400, 1e-3)):
        gk = make_grid(-6, 6, n)
        finals.append(solve_linear_fpe(law.density(gk), OU, 6.0, SchemeConfig(dt)).final.values)
    dx = 12.0 / 600
    e1 = np.sum(np.abs(finals[0] - _coarsen(finals[1]))) * dx
    e2 = np.sum(np.abs(finals[1] - _coarsen(finals[2]))) * dx / 2
    ratio = e1 / e2
    c.check("self-convergence ratio", ratio >= 1.7, ratio, 1.7)
    c.note(f"successive differences {e1:.3e} {e2:.3e}")
    _gate(c)


# ---------------------------------------------------------------- 3


def _shift_drift(coeffs: Tabulated, shift: float) -> Tabulated:
    return Tabulated(coeffs.grid, coeffs.times, coeffs.a_table, coeffs.b_table + shift,
                     name="shifted")


def test_criterion_3_superposition():
    c = Criterion(3, "superposition")
    g = make_grid(-6, 6, 1200)
    u0 = gaussian_density(g, 0.0, 0.25)
    cps = (0.25, 0.5)
    cfg = SimConfig(N=N_PART, dt=1e-3, T=0.5, seed=20240611, record_times=cps)
    heat = solve_linear_fpe(u0, HEAT, 0.5, SchemeConfig(1e-4), record_times=cps)
    P = PorousMedia("cubic")
    porous = solve_porous_media(u0, P, 0.5, SchemeConfig(1e-4), record_times=cps)
    lin = linearize(porous, P)
    cases = (("heat", heat, HEAT, Constant(1.0, 1.0)),
             ("porous", porous, lin, _shift_drift(lin, 1.0)))
    for name, traj, coeffs, wrong in cases:
        b = simulate_linearized(traj, coeffs, cfg)
        for r in check_superposition(traj, b, cps, rng=RngStream(cfg.seed)):
            c.check(f"{name} t={r.checkpoint:g} W1", r.passed, r.statistic, r.threshold)
        bad = simulate_linearized(traj, wrong, cfg)
        for r in check_superposition(traj, bad, cps, rng=RngStream(cfg.seed)):
            # the control must be rejected
            c.check(f"{name} mismatch t={r.checkpoint:g} rejected", not r.passed, r.statistic,
                    r.threshold)
    c.note("beta(r) = r + r^3/3; mismatch adds 1 to the drift")
    _gate(c)


# ---------------------------------------------------------------- 4


def test_criterion_4_flow_property():
    c = Criterion(4, "flow property")
    g = make_grid(-6, 6, 1200)
    law = GaussianLaw(0.0, 0.25)
    for name, coeffs, s in (("heat", HEAT, 0.0), ("ou_sin", TimeDependent("ou_sin"), 0.5)):
        rng = RngStream(101)
        f0 = check_flow_property(coeffs, law, g, s, 0.0, 0.25, N_PART, 1e-3, rng)
        c.check(f"{name} r=0 identity", f0.row.passed, f0.row.statistic, f0.row.threshold)
        f = check_flow_property(coeffs, law, g, s, 0.25, 0.25, N_PART, 1e-3, rng)
        c.check(f"{name} r=0.25", f.row.passed, f.row.statistic, f.row.threshold)
    _gate(c)


# ---------------------------------------------------------------- 5


def test_criterion_5_dirichlet():
    c = Criterion(5, "Dirichlet problem")
    dom, T = (-1.0, 1.0), 1.0
    probes = [(s, x) for s in (0.0, 0.5, 0.75) for x in (-0.5, 0.0, 0.5)]
    field = solve_backward_kolmogorov("right_indicator", HEAT, dom, T, SchemeConfig(1e-4),
                                      make_grid(-2, 2, 800), record_times=(0.0, 0.5, 0.75))
    for j, (s, x) in enumerate(probes):
        est = estimate_hitting_solution("right_indicator", HEAT, dom, T, (s, x), N_PART, 1e-4,
                                        RngStream(55, j))
        ref = float(field.at(s, x))
        tol = 3 * est.stderr + 0.01
        c.check(f"rho(s={s:g},x={x:g})", abs(est.value - ref) <= tol, abs(est.value - ref), tol)
        series = oracles.bm_right_exit_probability(x, T - s)
        c.note(f"s={s:g} x={x:g} mc={est.value:.5f} pde={ref:.5f} series={series:.5f}")
    r = verify_representation("x2", HEAT, 1.0, GaussianLaw(0.0, 0.25), N_PART, RngStream(56),
                              make_grid(-6, 6, 1200), SchemeConfig(1e-4), dt=1e-4,
                              bias_budget=1e-2)
    c.check("representation F=x^2", r.passed, r.discrepancy, r.tolerance)
    c.note(f"representation mc={r.mc:.5f} pde={r.pde:.5f} exact=1.25")
    _gate(c)


# ---------------------------------------------------------------- 6


def test_criterion_6_lyapunov():
    c = Criterion(6, "Lyapunov bounds")
    spec = LyapunovSpec("log1p_sq", 2.0, 2.0)
    gb = check_generator_bound(spec, OU, make_grid(-10, 10, 2000), np.linspace(0, 1, 11))
    c.check("generator residual", gb.passed, gb.worst, 0.0)
    worst = -math.inf
    for seed in range(20):
        tail = estimate_tail_bound(spec, OU, (0.0, 0.0), 1.0, 20_000, 1e-3, RngStream(900 + seed))
        worst = max(worst, tail.upper - tail.bound)
        c.check(f"doob seed={900 + seed}", tail.passed, tail.upper, tail.bound)
    c.note(f"largest Wilson upper minus bound over 20 seeds: {worst:.4g}")
    sm = check_supermartingale(spec, OU, (0.0, 0.0), 1.0, N_PART, (0.25, 0.5, 1.0), 1e-3,
                               RngStream(950))
    c.check("supermartingale", sm.passed, sm.worst_excess, 0.0)
    _gate(c)


# ---------------------------------------------------------------- 7


def test_criterion_7_jumps():
    c = Criterion(7, "jump perturbation")
    K = JumpKernel(0.5, 0.5, "gaussian", (0.0, 0.5))
    cfg = SimConfig(N=20_000, dt=1e-3, T=1.0, seed=7, record_full_paths=True)
    b = simulate_jump_process(OU, K, GaussianLaw(0.0, 0.25), cfg)
    for psi in ("one", "increment", "sq_increment"):
        r = check_jump_compensator(b, K, psi, 1.0)
        c.check(f"compensator {psi}", r.passed, abs(r.lhs - r.rhs), 3 * r.stderr)
    del b
    pb = simulate_jump_process(Constant(0.0, 0.0), JumpKernel(2.0), ParticleEnsemble(
        np.zeros(N_PART)), SimConfig(N=N_PART, dt=1e-2, T=1.0, seed=8))
    n = pb.events.counts(N_PART)
    se = n.std(ddof=1) / math.sqrt(N_PART)
    c.check("poisson mean c=2 t=1", abs(n.mean() - 2.0) <= 3 * se, abs(n.mean() - 2.0), 3 * se)
    cases = (("K=0", JumpKernel(0.0, 0.0), "gauss_bump", 1.0, 10.0),
             ("large alpha", JumpKernel(1.0, 0.0, "gaussian", (0.0, 0.5)), "gauss_bump", 50.0, 1.0),
             ("OU+jump", JumpKernel(0.5, 0.0, "gaussian", (0.0, 0.5)), "gauss_bump", 1.0, 10.0))
    for j, (name, Kr, f, alpha, T_max) in enumerate(cases):
        r = check_resolvent_identity(OU, Kr, f, alpha, 0.0, 10_000, T_max, 1e-3,
                                     RngStream(70, j))
        c.check(f"resolvent {name}", r.passed, abs(r.lhs - r.rhs), r.threshold)
        c.note(f"resolvent {name}: lhs={r.lhs:.5f} rhs={r.rhs:.5f} budget={r.budget:.3g}")
    rows = verify_jump_fpe_marginals(OU, JumpKernel(1.0, 0.0, "gaussian", (0.0, 0.3)),
                                     GaussianLaw(0.0, 0.25), 1.0, N_PART, make_grid(-6, 6, 600),
                                     (0.25, 0.5, 1.0), 1e-3, SchemeConfig(1e-3), RngStream(71))
    for r in rows:
        c.check(f"marginal t={r.checkpoint:g}", r.passed, r.statistic, r.threshold)
    _gate(c)


# ---------------------------------------------------------------- 8


def test_criterion_8_capacity():
    c = Criterion(8, "capacity")
    cover = capacity_samples([(-1.0, 1.0)], 1.0, HEAT, UniformLaw(-0.5, 0.5), 10.0, N_PART,
                             1e-3, RngStream(80))
    c.check("cover gives 1", float(cover.mean()) == 1.0, abs(float(cover.mean()) - 1.0), 0.0)
    mu0 = GaussianLaw(0.0, 0.04)
    family = {"G1": [(0.9, 1.0)], "G2": [(0.8, 1.1)], "G3": [(0.5, 1.5)],
              "M": [(-1.0, -0.9)], "G1uM": [(0.9, 1.0), (-1.0, -0.9)]}
    # common random numbers: every set sees the same paths
    v = {k: capacity_samples(G, 1.0, HEAT, mu0, 10.0, 20_000, 1e-3, RngStream(81))
         for k, G in family.items()}

    def paired(d):
        return float(d.mean()), float(d.std(ddof=1) / math.sqrt(d.size))

    for small, big in (("G1", "G2"), ("G2", "G3")):
        d, se = paired(v[small] - v[big])
        c.check(f"monotone {small}<{big}", d <= 3 * se, d, 3 * se)
    d, se = paired(v["G1uM"] - v["G1"] - v["M"])
    c.check("subadditive G1+M", d <= 3 * se, d, 3 * se)
    exact = hunt_capacity_gaussian((0.9, 1.0), 1.0, 1.0, 0.0, 0.04, dt=1e-3)
    c.note(f"cap(G1)={v['G1'].mean():.5f} closed form {exact:.5f}")
    _gate(c)


# ---------------------------------------------------------------- 9


def test_criterion_9_energy():
    c = Criterion(9, "sqrt(u) energy")
    g = make_grid(-6, 6, 1200)
    u = gaussian_density(g, 0.0, 0.25)
    frozen = DensityTrajectory(g, np.array([0.0, 0.5]), np.tile(u.values, (2, 1)))
    ref = gaussian_energy(0.25, 0.5)
    rel = abs(sqrt_energy(frozen) - ref) / ref
    c.check("frozen Gaussian", rel <= 0.05, rel, 0.05)
    heat = solve_linear_fpe(u, HEAT, 0.5, SchemeConfig(1e-4))
    ref = heat_energy(0.25, 0.5)
    rel = abs(sqrt_energy(heat) - ref) / ref
    c.check("heat 1/4 ln 3", rel <= 0.05, rel, 0.05)
    P = PorousMedia("cubic")

    def run(k):
        f = 2 ** (2 - k)
        gk = make_grid(-6, 6, 1200 // f)
        return solve_porous_media(gaussian_density(gk, 0.0, 0.25), P, 0.5, SchemeConfig(1e-4 * f))

    vals, ratios, ok = refinement_series(run, 3)
    c.check("porous refinement", ok, float(ratios.max()), 1.25)
    c.note("porous energies " + " ".join(f"{e:.5f}" for e in vals))
    _gate(c)


# ---------------------------------------------------------------- 10

DETERMINISM_OVERRIDES = """
sde.N = 20000
dirichlet.n_paths = 5000
dirichlet.rep_n = 5000
lyapunov.n_paths = 5000
jumps.n_paths = 5000
jumps.res_paths = 2000
capacity.n_paths = 5000
"""


def test_criterion_10_determinism(tmp_path):
    c = Criterion(10, "determinism")
    import suplab

    bundled = Path(suplab.__file__).parent / "scenarios" / "heat.scenario"
    keys = {ln.split("=")[0].strip() for ln in DETERMINISM_OVERRIDES.split("\n") if "=" in ln}
    kept = [ln for ln in bundled.read_text().splitlines()
            if ln.split("=")[0].strip() not in keys]
    sc = tmp_path / "det.scenario"
    sc.write_text("\n".join(kept) + DETERMINISM_OVERRIDES)
    outs = {}
    for n in ("1", "8"):
        out = tmp_path / f"threads{n}"
        env = dict(os.environ, SUPLAB_THREADS=n)
        r = subprocess.run([sys.executable, "-m", "suplab.cli", "all", str(sc), str(out)],
                           env=env, capture_output=True, text=True, timeout=1800)
        c.check(f"exit threads={n}", r.returncode == 0, r.returncode, 0)
        outs[n] = out
    csvs = sorted(p.name for p in outs["1"].glob("*.csv"))
    differ = [name for name in csvs
              if (outs["1"] / name).read_bytes() != (outs["8"] / name).read_bytes()]
    c.check(f"{len(csvs)} CSVs byte-identical", bool(csvs) and not differ, len(differ), 0)
    if differ:
        c.note("differing: " + ", ".join(differ))
    _gate(c)
