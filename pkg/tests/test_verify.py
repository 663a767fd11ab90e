from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from suplab.core.coefficients import Constant, OrnsteinUhlenbeck, TimeDependent
from suplab.core.grid import Density, DensityTrajectory, gaussian_density, make_grid
from suplab.core.laws import GaussianLaw
from suplab.core.rng import RngStream
from suplab.errors import InitialDominationFails
from suplab.fpe import SchemeConfig, solve_linear_fpe
from suplab.sde import SimConfig, simulate_linearized
from suplab.verify import (CheckRow, check_domination, check_flow_property, check_superposition,
                           gaussian_energy, heat_energy, refinement_series, smooth_bump,
                           sqrt_energy, sqrt_energy_density, write_verdicts_csv)

G = make_grid(-6, 6, 1200)


@pytest.fixture(scope="module")
def heat_traj():
    u0 = gaussian_density(G, 0.0, 0.25)
    return solve_linear_fpe(u0, Constant(1.0, 0.0), 0.5, SchemeConfig(1e-3),
                            record_times=(0.25, 0.5))


def test_superposition_and_mismatch(heat_traj):
    cfg = SimConfig(N=40_000, dt=1e-3, T=0.5, seed=11, record_times=(0.25, 0.5))
    b = simulate_linearized(heat_traj, Constant(1.0, 0.0), cfg)
    rows = check_superposition(heat_traj, b, (0.0, 0.25, 0.5), rng=RngStream(1))
    assert all(r.passed for r in rows), rows
    # the t = 0 allowance is the smoothing of the estimator
    assert rows[0].threshold > rows[1].threshold
    bad = simulate_linearized(heat_traj, Constant(1.0, 1.0), cfg)
    assert not check_superposition(heat_traj, bad, (0.5,), rng=RngStream(1))[0].passed


def test_flow_r0_is_exact_and_r_positive_passes():
    law = GaussianLaw(0, 0.25)
    f0 = check_flow_property(Constant(), law, G, 0.0, 0.0, 0.25, 20_000, 1e-3, RngStream(3))
    assert f0.row.statistic == 0.0 and np.array_equal(f0.one_leg, f0.two_leg)
    f = check_flow_property(TimeDependent("ou_sin"), law, G, 0.5, 0.25, 0.25, 20_000, 1e-3,
                            RngStream(3))
    assert f.row.passed, f.row


def test_domination():
    u0 = gaussian_density(G, 0.0, 0.25)
    nu0 = Density(G, u0.values * (G.centers > 0)).normalized()
    rows = check_domination(nu0, 2.0, OrnsteinUhlenbeck(), u0, 1.0, (0.25, 1.0), SchemeConfig(1e-3))
    assert all(r.passed for r in rows)
    with pytest.raises(InitialDominationFails):
        check_domination(nu0, 1.5, OrnsteinUhlenbeck(), u0, 1.0, (0.25,), SchemeConfig(1e-3))


# ---------------------------------------------------------------- energy


def test_frozen_gaussian_energy():
    var, T = 0.5, 2.0
    u = gaussian_density(G, 0.0, var).values
    tr = DensityTrajectory(G, np.linspace(0, T, 5), np.tile(u, (5, 1)))
    assert sqrt_energy(tr) == pytest.approx(gaussian_energy(var, T), rel=1e-3)
    assert gaussian_energy(var, T) == T / (4 * var)


def test_heat_energy(heat_traj):
    tr = solve_linear_fpe(heat_traj.slice(0), Constant(1.0, 0.0), 0.5, SchemeConfig(1e-3))
    assert heat_energy(0.25, 0.5) == pytest.approx(np.log(3.0) / 4)
    assert sqrt_energy(tr) == pytest.approx(heat_energy(0.25, 0.5), rel=1e-3)


def test_refinement_series_flags_blowup():
    def frozen(var):
        return lambda k: DensityTrajectory(G, np.array([0.0, 1.0]),
                                           np.tile(gaussian_density(G, 0, var / 4**k).values, (2, 1)))

    vals, ratios, ok = refinement_series(frozen(1.0), levels=3)
    assert not ok and ratios == pytest.approx([4.0, 4.0], rel=1e-3)
    vals, ratios, ok = refinement_series(lambda k: DensityTrajectory(
        G, np.array([0.0, 1.0]), np.tile(gaussian_density(G, 0, 0.5).values, (2, 1))), levels=2)
    assert ok and ratios[0] == 1.0


def test_bump_is_compactly_supported():
    x = np.array([-5.0, -4.0, 0.0, 3.9, 4.0])
    h = smooth_bump(x)
    assert h[0] == h[1] == h[4] == 0.0 and h[2] == 1.0 and 0 < h[3] < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 5.0), min_size=8, max_size=8))
def test_energy_density_reflection_and_scaling(v):
    g = make_grid(0, 1, 8)
    u = np.array(v)
    e = sqrt_energy_density(u, g)[0]
    assert e >= 0
    assert sqrt_energy_density(u[::-1], g)[0] == pytest.approx(e, rel=1e-12, abs=1e-15)
    # sqrt(u) is homogeneous of degree 1/2, so the energy scales with the mass
    lifted = np.maximum(u, 1e-12)
    assert sqrt_energy_density(4 * lifted, g)[0] == pytest.approx(
        4 * sqrt_energy_density(lifted, g)[0], rel=1e-9, abs=1e-12)


def test_verdicts_csv(tmp_path):
    p = tmp_path / "v.csv"
    write_verdicts_csv([CheckRow("flow", 0.25, 0.01, 0.02), CheckRow("flow", 0.5, 0.3, 0.02)], p)
    lines = p.read_text().splitlines()
    assert lines[0] == "check,checkpoint,statistic,threshold,verdict"
    assert lines[1].endswith(",PASS") and lines[2].endswith(",FAIL")
