from __future__ import annotations

import math

import numpy as np
import pytest

from suplab.core.coefficients import Constant, OrnsteinUhlenbeck, Parametric, PorousMedia
from suplab.core.grid import make_grid, uniform_density
from suplab.core.laws import GaussianLaw, UniformLaw
from suplab.core.particles import ParticleEnsemble
from suplab.core.rng import DIFFUSION, RngStream
from suplab.errors import NegativeDiffusion, TrajectoryTooShort
from suplab.fpe import SchemeConfig, solve_linear_fpe, solve_porous_media
from suplab.sde import (SimConfig, em_step, sample_initial, simulate, simulate_linearized,
                        simulate_self_consistent)


def test_compiled_path_matches_numpy_euler():
    rng = RngStream(41)
    coeffs = Parametric(a0=0.7, a2=0.2, theta=0.8, b0=0.1, name="t")
    ens = ParticleEnsemble(np.linspace(-1, 1, 257))
    n, dt = 30, 0.01
    b = simulate(coeffs, ens, n * dt, dt, rng, full=True)
    x = ens.positions.copy()
    for k in range(n):
        a = 0.7 + 0.2 * x * x
        drift = 0.1 - 0.8 * x
        x = x + drift * dt + np.sqrt(a * dt) * rng.normals(ens.ids, k, DIFFUSION)
        assert np.allclose(b.states[:, k + 1], x, rtol=0, atol=1e-12)


def test_em_step_loop_is_bit_identical_to_kernel():
    rng = RngStream(5)
    ens = sample_initial(GaussianLaw(0, 0.25), 1000, rng)
    b = simulate(OrnsteinUhlenbeck(), ens, 0.05, 1e-3, rng)
    cur = ens
    for _ in range(50):
        cur = em_step(cur, OrnsteinUhlenbeck(), 1e-3, rng)
    assert np.array_equal(cur.positions, b.states[:, -1])


def test_restart_continues_the_same_paths():
    rng = RngStream(6)
    ens = sample_initial(GaussianLaw(0, 0.25), 500, rng)
    whole = simulate(OrnsteinUhlenbeck(), ens, 0.2, 1e-3, rng)
    half = simulate(OrnsteinUhlenbeck(), ens, 0.1, 1e-3, rng).final_ensemble()
    rest = simulate(OrnsteinUhlenbeck(), half, 0.1, 1e-3, rng)
    assert np.array_equal(whole.states[:, -1], rest.states[:, -1])


def test_ou_moments():
    rng = RngStream(8)
    ens = ParticleEnsemble(np.full(100_000, 1.0))
    x = simulate(OrnsteinUhlenbeck(), ens, 1.0, 1e-3, rng).states[:, -1]
    m = math.exp(-1.0)
    v = 0.5 * (1 - math.exp(-2.0))
    assert abs(x.mean() - m) < 4 * math.sqrt(v / x.size) + 1e-3
    assert x.var() == pytest.approx(v, rel=2e-2)


def test_sample_initial_laws():
    rng = RngStream(9)
    g = sample_initial(GaussianLaw(1.0, 4.0), 50_000, rng).positions
    assert g.mean() == pytest.approx(1.0, abs=0.04) and g.var() == pytest.approx(4.0, rel=0.03)
    u = sample_initial(UniformLaw(-1, 3), 50_000, rng).positions
    assert u.min() >= -1 and u.max() <= 3 and u.mean() == pytest.approx(1.0, abs=0.03)


def test_negative_diffusion_detected():
    ens = ParticleEnsemble(np.zeros(10))
    with pytest.raises(NegativeDiffusion):
        simulate(Parametric(a0=-1.0), ens, 0.01, 1e-3, RngStream(0))


def test_two_dimensional_diagonal():
    rng = RngStream(10)
    ens = ParticleEnsemble(np.zeros((20_000, 2)))
    b = simulate(Constant(1.0, 0.5), ens, 0.5, 1e-2, rng)
    x = b.states[:, -1]
    assert x.shape == (20_000, 2)
    assert np.allclose(x.mean(axis=0), 0.25, atol=0.02)
    assert np.allclose(x.var(axis=0), 0.5, rtol=0.04)
    # the two coordinates use independent noise
    assert abs(np.corrcoef(x.T)[0, 1]) < 0.03


def test_reflecting_window():
    cfg = SimConfig(N=2000, dt=1e-2, T=2.0, boundary="reflect", window=(-1.0, 1.0))
    u0 = uniform_density(make_grid(-1, 1, 40), -0.5, 0.5)
    tr = solve_linear_fpe(u0, Constant(), 2.0, SchemeConfig(1e-2))
    b = simulate_linearized(tr, Constant(), cfg)
    assert b.states.min() >= -1 and b.states.max() <= 1


def test_linearized_needs_long_enough_trajectory(grid600, heat_u0):
    tr = solve_linear_fpe(heat_u0, Constant(), 0.1, SchemeConfig(1e-2))
    with pytest.raises(TrajectoryTooShort):
        simulate_linearized(tr, Constant(), SimConfig(N=10, T=0.2))


def test_linearized_porous_spreads_like_pde(heat_u0):
    P = PorousMedia("linear")
    tr = solve_porous_media(heat_u0, P, 0.5, SchemeConfig(1e-3))
    b = simulate_linearized(tr, P, SimConfig(N=50_000, dt=1e-3, T=0.5, seed=3))
    # beta(r) = r gives a = 2: variance 0.25 + 2 * 0.5
    assert b.states[:, -1].var() == pytest.approx(1.25, rel=3e-2)


def test_self_consistent_warns_and_spreads(grid600):
    cfg = SimConfig(N=500, dt=1e-2, T=0.2, seed=4)
    with pytest.warns(RuntimeWarning):
        simulate_self_consistent(PorousMedia("linear"), GaussianLaw(0, 0.25), cfg, grid600)
    cfg = SimConfig(N=20_000, dt=1e-2, T=0.5, seed=4)
    b, tr = simulate_self_consistent(PorousMedia("linear"), GaussianLaw(0, 0.25), cfg, grid600)
    assert b.states[:, -1].var() == pytest.approx(1.25, rel=4e-2)
    assert tr.times[-1] == pytest.approx(0.5)
