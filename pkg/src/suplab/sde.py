"""Euler-Maruyama particle engine.

Three drivers share one compiled step: plain linear diffusions, the
linearized McKean-Vlasov SDE (porous coefficients frozen along a PDE
density), and the self-consistent particle approximation in which the
density inside the coefficients is the ensemble's own KDE.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core.coefficients import (
    CoefficientModel,
    Linearized,
    PorousMedia,
    density_coefficients,
    linearize,
)
from .core.grid import DensityTrajectory, SpatialGrid, steps_for
from .core.kde import kde_positions, silverman_bandwidth
from .core.laws import GaussianLaw, GridLaw, UniformLaw
from .core.particles import ParticleEnsemble, PathBundle
from .core.rng import INIT, RngStream
from .errors import NegativeDiffusion, TrajectoryTooShort

log = logging.getLogger(__name__)

MIN_SELF_CONSISTENT_N = 1000
_NO_V = np.zeros(3)


@dataclass(frozen=True)
class SimConfig:
    N: int = 10_000
    dt: float = 1e-3
    T: float = 1.0
    seed: int = 0
    replicate: int = 0
    boundary: str = "none"  # or "reflect" (at the escape window)
    record_full_paths: bool = False
    record_times: tuple = ()
    kde_refresh_every: int = 5
    bandwidth: float = 0.0  # 0 selects Silverman's rule
    window: tuple | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.kde_refresh_every < 1:
            raise ValueError("kde_refresh_every must be >= 1")
        if self.boundary not in ("none", "reflect"):
            raise ValueError(f"unknown boundary mode {self.boundary!r}")

    @property
    def rng(self) -> RngStream:
        return RngStream(self.seed, self.replicate)

    @property
    def n_steps(self) -> int:
        return steps_for(self.T, self.dt)


def _pack_args(coeffs: CoefficientModel):
    p = coeffs.pack()
    return (p.kind, p.par, p.tt, p.ta, p.tb, p.x0, p.dx)


def _seed_args(rng: RngStream):
    return np.uint64(rng.seed), np.uint64(rng.replicate)


# --------------------------------------------------------------------------


def sample_initial(law, N: int, rng: RngStream, start_clock=0.0, ids=None) -> ParticleEnsemble:
    """I.i.d. draws from ``law``; ``GridLaw`` uses inverse-CDF sampling."""
    ids = np.arange(N, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
    u = rng.uniforms(ids, block=0, substream=INIT)
    if isinstance(law, GaussianLaw):
        # Box-Muller on the same block, computed by the compiled generator
        z = rng.normal_block(ids, block=0, substream=INIT)[:, 0]
        x = law.mean + math.sqrt(law.var) * z
    elif isinstance(law, UniformLaw):
        x = law.a + (law.b - law.a) * u[:, 0]
    elif isinstance(law, GridLaw):
        x = law.sample_from_uniforms(u[:, 0], u[:, 1])
    else:
        raise TypeError(f"cannot sample from {type(law).__name__}")
    return ParticleEnsemble(x, start_clock, ids=ids)


def em_step(ens: ParticleEnsemble, coeffs: CoefficientModel, dt: float,
            rng: RngStream) -> ParticleEnsemble:
    """One Euler-Maruyama step ``x + b dt + sqrt(a dt) xi`` at the
    ensemble's clock. The step index is the noise counter."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if ens.dt is not None and ens.step > 0 and ens.dt != dt:
        raise ValueError("an ensemble keeps one step size; got a different dt")
    seed, rep = _seed_args(rng)
    clock = ens.start_clock + ens.step * dt
    flags = np.zeros(ens.n, dtype=np.int64)
    out = np.empty_like(ens.positions)
    kern = K.em_step_kernel if ens.dim == 1 else K.em_step_kernel_2d
    kern(*_pack_args(coeffs), ens.positions, ens.ids, seed, rep, clock, dt,
         np.int64(ens.step), out, flags)
    if np.any(flags & K.NEG_DIFFUSION):
        raise NegativeDiffusion(f"a < 0 encountered at clock {clock}")
    return ens.with_positions(out, step=ens.step + 1, dt=dt)


def _record_offsets(n_steps, dt, record_times, full, step0=0):
    if full:
        return np.arange(n_steps + 1, dtype=np.int64)
    offs = {0, n_steps}
    for t in record_times:
        k = int(round(t / dt)) - step0
        if abs((k + step0) * dt - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"record time {t} is not on the dt={dt} lattice")
        if 0 <= k <= n_steps:
            offs.add(k)
    return np.array(sorted(offs), dtype=np.int64)


def simulate(coeffs: CoefficientModel, ens: ParticleEnsemble, T: float, dt: float,
             rng: RngStream, record_times=(), full=False, window=None, reflect=False,
             vpar=None):
    """Run ``ens`` forward for elapsed time ``T``; returns a PathBundle.

    ``vpar`` (three floats) defines ``V = v0 + v1 log(1+x^2) + v2 x^2`` whose
    running maximum is returned in ``bundle.meta['vmax']``.
    """
    if ens.dim != 1:
        return _simulate_2d(coeffs, ens, T, dt, rng, record_times, full)
    if ens.dt is not None and ens.step > 0 and ens.dt != dt:
        raise ValueError("an ensemble keeps one step size")
    n = steps_for(T, dt)
    rec = _record_offsets(n, dt, [t + ens.elapsed for t in record_times], full, ens.step)
    lo, hi = window if window is not None else (-np.inf, np.inf)
    seed, rep = _seed_args(rng)
    states = np.empty((ens.n, rec.size))
    vmax = np.empty(ens.n)
    escaped = np.zeros(ens.n, dtype=np.bool_)
    flags = np.zeros(ens.n, dtype=np.int64)
    if reflect:
        _simulate_reflect(coeffs, ens, n, dt, rng, rec, states, lo, hi)
        vmax[:] = np.nan
    else:
        K.simulate_kernel(*_pack_args(coeffs), np.ascontiguousarray(ens.positions), ens.ids,
                          seed, rep, ens.start_clock, dt, np.int64(ens.step), np.int64(n), rec,
                          states, _NO_V if vpar is None else np.asarray(vpar, float), vmax,
                          float(lo), float(hi), escaped, flags)
    if np.any(flags & K.NEG_DIFFUSION):
        raise NegativeDiffusion("a < 0 encountered during simulation")
    n_esc = int(escaped.sum())
    if n_esc:
        log.info("%d of %d paths left the window [%g, %g]", n_esc, ens.n, lo, hi)
    return PathBundle(ens.start_clock, dt, n, rec, states, ens.ids, step0=ens.step,
                      escaped=n_esc, meta={"vmax": vmax} if vpar is not None else {})


def _simulate_reflect(coeffs, ens, n, dt, rng, rec, states, lo, hi):
    # stepwise driver; reflection is applied after each em_step
    cur = ens
    r = 0
    if rec[0] == 0:
        states[:, 0] = cur.positions
        r = 1
    for k in range(n):
        cur = em_step(cur, coeffs, dt, rng)
        x = cur.positions
        x = np.where(x < lo, 2 * lo - x, x)
        x = np.where(x > hi, 2 * hi - x, x)
        cur = cur.with_positions(x)
        while r < rec.size and rec[r] == k + 1:
            states[:, r] = x
            r += 1


def _simulate_2d(coeffs, ens, T, dt, rng, record_times, full):
    n = steps_for(T, dt)
    rec = _record_offsets(n, dt, [t + ens.elapsed for t in record_times], full, ens.step)
    states = np.empty((ens.n, rec.size, 2))
    cur = ens
    r = 0
    if rec[0] == 0:
        states[:, 0] = cur.positions
        r = 1
    for k in range(n):
        cur = em_step(cur, coeffs, dt, rng)
        while r < rec.size and rec[r] == k + 1:
            states[:, r] = cur.positions
            r += 1
    return PathBundle(ens.start_clock, dt, n, rec, states, ens.ids, step0=ens.step)


def simulate_linearized(u_traj: DensityTrajectory, coeffs, cfg: SimConfig) -> PathBundle:
    """Paths of the SDE whose coefficients are frozen along ``u_traj``.

    ``coeffs`` is either a PorousMedia triple (linearized here) or a linear
    model, which is simulated as is. The initial law is ``u_traj`` at t=0.
    """
    if u_traj.t_end < cfg.T - 1e-12:
        raise TrajectoryTooShort(f"trajectory ends at {u_traj.t_end} < T={cfg.T}")
    if isinstance(coeffs, PorousMedia):
        coeffs = linearize(u_traj, coeffs)
    elif isinstance(coeffs, Linearized) and coeffs.trajectory is not u_traj:
        tr = coeffs.trajectory
        if tr is not None and tr.t_end < cfg.T - 1e-12:
            raise TrajectoryTooShort("linearized coefficients do not cover [0, T]")
    rng = cfg.rng
    ens = sample_initial(GridLaw(u_traj.slice(0)), cfg.N, rng)
    window = cfg.window or (u_traj.grid.x_min, u_traj.grid.x_max)
    return simulate(coeffs, ens, cfg.T, cfg.dt, rng, cfg.record_times, cfg.record_full_paths,
                    window=window, reflect=cfg.boundary == "reflect")


def simulate_self_consistent(porous: PorousMedia, init_law, cfg: SimConfig,
                             grid: SpatialGrid):
    """Particle McKean-Vlasov approximation with the KDE in the loop.

    Every ``cfg.kde_refresh_every`` steps the ensemble's KDE is recomputed
    and the Nemytskii coefficients are frozen at it until the next refresh.
    Returns ``(PathBundle, DensityTrajectory)``; the trajectory holds the
    KDE at every refresh and at T. Uniqueness of the self-consistent law
    is assumed here; no simulation can check it.
    """
    if cfg.N < MIN_SELF_CONSISTENT_N:
        warnings.warn(
            f"self-consistent run with N={cfg.N} < {MIN_SELF_CONSISTENT_N}: the "
            "Nemytskii quotient evaluated on a KDE is statistically meaningless",
            RuntimeWarning, stacklevel=2)
    rng = cfg.rng
    n = cfg.n_steps
    ens = sample_initial(init_law, cfg.N, rng)
    rec = _record_offsets(n, cfg.dt, cfg.record_times, cfg.record_full_paths)
    states = np.empty((ens.n, rec.size))
    seed, rep = _seed_args(rng)
    lo, hi = cfg.window or (grid.x_min, grid.x_max)
    x = np.ascontiguousarray(ens.positions)
    kde_t, kde_v = [], []
    escaped = np.zeros(ens.n, dtype=np.bool_)
    r = 0
    if rec[0] == 0:
        states[:, 0] = x
        r = 1
    k = 0
    h_used = []
    while k < n:
        h = cfg.bandwidth or silverman_bandwidth(x)
        h_used.append(h)
        dens = kde_positions(x, grid, h, t=k * cfg.dt)
        kde_t.append(k * cfg.dt)
        kde_v.append(dens.values)
        frozen = density_coefficients(porous, dens.values, grid, t=k * cfg.dt)
        m = min(cfg.kde_refresh_every, n - k)
        chunk_rec = np.array([q - k for q in rec[r:] if q - k <= m], dtype=np.int64)
        chunk_rec = np.concatenate([[0], chunk_rec[chunk_rec > 0], [m]]).astype(np.int64)
        chunk_states = np.empty((ens.n, chunk_rec.size))
        vmax = np.empty(ens.n)
        esc = np.zeros(ens.n, dtype=np.bool_)
        flags = np.zeros(ens.n, dtype=np.int64)
        K.simulate_kernel(*_pack_args(frozen), x, ens.ids, seed, rep, 0.0, cfg.dt,
                          np.int64(k), np.int64(m), chunk_rec, chunk_states, _NO_V, vmax,
                          float(lo), float(hi), esc, flags)
        escaped |= esc
        for j, q in enumerate(chunk_rec):
            if 0 < q and r < rec.size and rec[r] == k + q:
                states[:, r] = chunk_states[:, j]
                r += 1
        x = np.ascontiguousarray(chunk_states[:, -1])
        k += m
    h = cfg.bandwidth or silverman_bandwidth(x)
    final = kde_positions(x, grid, h, t=n * cfg.dt)
    if kde_t[-1] < n * cfg.dt:
        kde_t.append(n * cfg.dt)
        kde_v.append(final.values)
    traj = DensityTrajectory(grid, np.array(kde_t), np.array(kde_v),
                             meta={"bandwidths": h_used, "kde_refresh_every": cfg.kde_refresh_every})
    bundle = PathBundle(0.0, cfg.dt, n, rec, states, ens.ids, escaped=int(escaped.sum()),
                        meta={"mode": "self_consistent"})
    return bundle, traj
