from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from suplab.core.coefficients import Constant, OrnsteinUhlenbeck
from suplab.core.grid import make_grid
from suplab.core.jump_kernel import JumpKernel
from suplab.core.laws import GaussianLaw
from suplab.core.particles import ParticleEnsemble
from suplab.core.rng import RngStream
from suplab.errors import DominationViolated, UnknownPsi
from suplab.fpe import SchemeConfig
from suplab.io import read_csv
from suplab.jumps import (check_jump_compensator, check_resolvent_identity, interarrival_times,
                          psi_function, resolvent_budget, simulate_jump_process,
                          verify_jump_fpe_marginals, write_events_csv)
from suplab.sde import SimConfig, simulate

STILL = Constant(0.0, 0.0)


@pytest.fixture(scope="module")
def poisson_bundle():
    K = JumpKernel(2.0, 0.0, "gaussian", (0.3, 0.1))
    ens = ParticleEnsemble(np.zeros(50_000))
    cfg = SimConfig(N=50_000, dt=1e-2, T=1.0, record_full_paths=True)
    return K, simulate_jump_process(STILL, K, ens, cfg, RngStream(5))


def test_poisson_counts(poisson_bundle):
    _, b = poisson_bundle
    n = b.events.counts(50_000)
    assert abs(n.mean() - 2.0) <= 4 * math.sqrt(2.0 / n.size)
    assert n.var() == pytest.approx(2.0, rel=0.04)
    # event times are logged sorted within each path
    same = b.events.path_id[1:] == b.events.path_id[:-1]
    assert np.all(np.diff(b.events.t)[same] >= 0)


def test_first_arrival_is_truncated_exponential(poisson_bundle):
    _, b = poisson_bundle
    ev = b.events
    gaps = interarrival_times(ev, np.arange(3000))
    _, first = np.unique(ev.path_id[ev.path_id < 3000], return_index=True)
    t1 = ev.t[first]
    # the first gap of each path is its first event time
    assert np.isin(t1, gaps).all()
    # rate 2 conditioned on at least one event in [0, 1]
    cdf = lambda t: -np.expm1(-2 * np.asarray(t)) / -math.expm1(-2.0)  # noqa: E731
    assert stats.kstest(t1, cdf).pvalue > 1e-3


@pytest.mark.parametrize("psi", ["one", "increment", "sq_increment", "abs_increment"])
def test_compensator_constant_rate(poisson_bundle, psi):
    K, b = poisson_bundle
    assert check_jump_compensator(b, K, psi, 1.0).passed


def test_compensator_state_dependent_rate():
    K = JumpKernel(0.5, 0.5, "gaussian", (0.0, 0.5))
    cfg = SimConfig(N=20_000, dt=1e-3, T=1.0, record_full_paths=True)
    b = simulate_jump_process(OrnsteinUhlenbeck(), K, GaussianLaw(0, 0.25), cfg, RngStream(6))
    for psi in ("one", "increment", "sq_increment"):
        r = check_jump_compensator(b, K, psi, 1.0)
        assert r.passed, r


def test_compensator_needs_full_paths():
    K = JumpKernel(1.0)
    b = simulate_jump_process(STILL, K, ParticleEnsemble(np.zeros(10)),
                              SimConfig(N=10, dt=1e-2, T=1.0))
    with pytest.raises(ValueError):
        check_jump_compensator(b, K, "one", 1.0)


def test_shift_kernel_moves_by_count():
    K = JumpKernel(2.0, 0.0, "shift", (0.5,))
    b = simulate_jump_process(STILL, K, ParticleEnsemble(np.zeros(1000)),
                              SimConfig(N=1000, dt=1e-2, T=1.0), RngStream(2))
    assert np.allclose(b.states[:, -1], 0.5 * b.events.counts(1000), atol=1e-12)


def test_thinning_rate_does_not_change_law():
    # a larger dominating rate only adds rejected ticks
    ens = ParticleEnsemble(np.zeros(40_000))
    cfg = SimConfig(N=40_000, dt=1e-2, T=1.0)
    n1 = simulate_jump_process(STILL, JumpKernel(0.2, 0.8), ens, cfg, RngStream(3)).events
    n2 = simulate_jump_process(STILL, JumpKernel(0.2, 0.8, lam=3.0), ens, cfg, RngStream(4)).events
    c1, c2 = n1.counts(40_000), n2.counts(40_000)
    se = math.sqrt(c1.var() / c1.size + c2.var() / c2.size)
    assert abs(c1.mean() - c2.mean()) <= 4 * se
    # jumps of size 0.1 keep paths near 0, where the rate is c0 + c1 = 1
    assert 0.9 < c1.mean() <= 1.0 + 4 * math.sqrt(1.0 / c1.size)


def test_zero_kernel_is_plain_simulation():
    ens = ParticleEnsemble(np.linspace(-1, 1, 500))
    rng = RngStream(9)
    b0 = simulate_jump_process(OrnsteinUhlenbeck(), JumpKernel(0, 0), ens,
                               SimConfig(N=500, dt=1e-3, T=0.5), rng)
    b1 = simulate(OrnsteinUhlenbeck(), ens, 0.5, 1e-3, rng)
    assert np.array_equal(b0.states[:, -1], b1.states[:, -1]) and len(b0.events) == 0


def test_catalog_errors():
    with pytest.raises(UnknownPsi):
        psi_function("cube")
    with pytest.raises(DominationViolated):
        simulate_jump_process(STILL, JumpKernel(1.0, 0.0, lam=0.5), ParticleEnsemble(np.zeros(3)),
                              SimConfig(N=3, dt=1e-2, T=0.1))


def test_resolvent_budget_value():
    # |f| = 1, alpha = lam = 1, horizon 10, three restarts
    assert resolvent_budget((1.0, 0.0, 0.0), 1.0, 1.0, 10.0, 3) == pytest.approx(
        math.exp(-10.0) + 2.0 * 0.5**4, rel=1e-14)


def test_resolvent_constant_integrand():
    K = JumpKernel(1.0, 0.0, "gaussian", (0.0, 0.5))
    r = check_resolvent_identity(OrnsteinUhlenbeck(), K, "one", 5.0, 0.0, 4000, 2.0, 1e-3,
                                 RngStream(11))
    # f = 1: the left-point sum of e^{-alpha t} whatever the dynamics
    assert r.lhs == pytest.approx(1e-3 * -math.expm1(-10.0) / -math.expm1(-5e-3), rel=1e-9)
    assert r.passed


def test_resolvent_state_dependent():
    K = JumpKernel(0.5, 0.0, "gaussian", (0.0, 0.5))
    r = check_resolvent_identity(OrnsteinUhlenbeck(), K, "gauss_bump", 2.0, 0.0, 5000, 5.0, 1e-3,
                                 RngStream(12))
    assert r.passed, (r.lhs, r.rhs, r.threshold)


def test_jump_marginals_match_perturbed_fpe():
    rows = verify_jump_fpe_marginals(OrnsteinUhlenbeck(), JumpKernel(1.0, 0.0, "gaussian", (0, 0.3)),
                                     GaussianLaw(0, 0.25), 0.5, 40_000, make_grid(-6, 6, 600),
                                     (0.25, 0.5), 1e-3, SchemeConfig(1e-3), RngStream(13))
    assert all(r.passed for r in rows), rows


def test_events_csv(tmp_path, poisson_bundle):
    _, b = poisson_bundle
    p = tmp_path / "ev.csv"
    write_events_csv(b.events, p)
    header, data = read_csv(p)
    assert header == ["path_id", "t", "x_pre", "x_post"]
    assert data.shape == (len(b.events), 4)
    assert np.array_equal(data[:, 1], b.events.t)
