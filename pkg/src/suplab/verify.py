"""Statistical checks of the structural properties of FPE solutions.

Each check returns ``CheckRow`` records (one per checkpoint) carrying the
statistic, the threshold it is compared with and the verdict, ready for the
``check,checkpoint,statistic,threshold,verdict`` CSV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core.coefficients import CoefficientModel
from .core.grid import Density, DensityTrajectory, SpatialGrid, steps_for
from .core.kde import bootstrap_w1, kde_positions, silverman_bandwidth
from .core.laws import GridLaw
from .core.metrics import wasserstein1
from .core.particles import ParticleEnsemble, PathBundle
from .core.rng import AUX, RESAMPLE, RngStream
from .errors import InitialDominationFails
from .fpe import SchemeConfig, solve_linear_fpe
from .sde import sample_initial, simulate

N_BOOT = 200
DOMINATION_ABS = 1e-8
DOMINATION_REL = 1e-6
REFINEMENT_RATIO = 1.25


@dataclass
class CheckRow:
    check: str
    checkpoint: float
    statistic: float
    threshold: float

    def __post_init__(self):
        self.checkpoint = float(self.checkpoint)
        self.statistic = float(self.statistic)
        self.threshold = float(self.threshold)

    @property
    def passed(self) -> bool:
        return bool(self.statistic <= self.threshold)

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


def all_passed(rows) -> bool:
    return all(r.passed for r in rows)


def write_verdicts_csv(rows, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("check,checkpoint,statistic,threshold,verdict\n")
        for r in rows:
            fh.write(f"{r.check},{r.checkpoint:.17g},{r.statistic:.17g},"
                     f"{r.threshold:.17g},{r.verdict}\n")


# --------------------------------------------------------------------------
# marginals


def marginal_w1(x, reference: Density, bandwidth, rng: RngStream, tag=AUX):
    """``(W1(KDE(x), reference), bootstrap stderr, bandwidth used)``."""
    grid = reference.grid
    h = bandwidth or silverman_bandwidth(x)
    est = kde_positions(x, grid, h)
    w = wasserstein1(est, reference.normalized())
    se, _ = bootstrap_w1(x, grid, h, reference.normalized(), rng.generator(tag), N_BOOT)
    return w, se, h


def check_superposition(u_traj: DensityTrajectory, bundle: PathBundle, checkpoints,
                        bandwidth=0.0, rng: RngStream | None = None,
                        name="superposition") -> list[CheckRow]:
    """W1 between the KDE of the simulated marginal and the PDE slice at each
    checkpoint; pass iff ``W1 <= 3 * bootstrap stderr + 2 dx``. At ``t = 0``
    the threshold is the smoothing allowance ``2 h + dx``."""
    rng = rng or RngStream(0)
    dx = u_traj.grid.dx
    rows = []
    for j, t in enumerate(checkpoints):
        ref = u_traj.at(t) if t > 0 else u_traj.slice(0)
        x = bundle.at(t)
        w, se, h = marginal_w1(x, ref, bandwidth, rng, tag=AUX + 16 + j)
        thr = 2 * h + dx if t == 0 else 3 * se + 2 * dx
        rows.append(CheckRow(name, float(t), w, thr))
    return rows


# --------------------------------------------------------------------------
# flow property


@dataclass
class FlowResult:
    row: CheckRow
    one_leg: np.ndarray
    two_leg: np.ndarray
    bandwidth: float
    stderr: float


def check_flow_property(coeffs: CoefficientModel, init_law, grid: SpatialGrid, s, r, t, N,
                        dt, rng: RngStream, bandwidth=0.0) -> FlowResult:
    """Chapman-Kolmogorov: evolve ``nu_s`` for ``r + t`` from clock s, versus
    evolve for r, take the marginal, restart fresh paths from it at clock
    ``s + r`` and evolve for t. Compared by W1 of the final KDEs; pass iff
    ``W1 <= 3 * combined stderr + 2 h``.

    Fresh paths are drawn i.i.d. from the KDE of the intermediate ensemble
    (RESAMPLE substream). For ``r = 0`` the intermediate marginal is the
    initial law itself, so both constructions coincide draw for draw.
    Both legs keep absolute step counters for their diffusion noise.
    """
    n_r = steps_for(r, dt)
    steps_for(t, dt)
    ens = sample_initial(init_law, N, rng, start_clock=float(s))
    one = simulate(coeffs, ens, r + t, dt, rng).states[:, -1]
    if n_r == 0:
        restart = ens
    else:
        mid = simulate(coeffs, ens, r, dt, rng).states[:, -1]
        h_mid = bandwidth or silverman_bandwidth(mid)
        law = GridLaw(kde_positions(mid, grid, h_mid))
        u = rng.uniforms(ens.ids, block=0, substream=RESAMPLE)
        x = law.sample_from_uniforms(u[:, 0], u[:, 1])
        restart = ParticleEnsemble(x, float(s), ids=ens.ids, step=n_r, dt=dt)
    two = simulate(coeffs, restart, t, dt, rng).states[:, -1]
    h = bandwidth or silverman_bandwidth(one)
    k1 = kde_positions(one, grid, h)
    k2 = kde_positions(two, grid, h)
    w = wasserstein1(k1, k2)
    if np.array_equal(one, two):
        se = 0.0
    else:
        se, _ = bootstrap_w1(one, grid, h, k2, rng.generator(AUX + 8), N_BOOT, other=two)
    row = CheckRow("flow", float(r), w, 3 * se + 2 * h)
    return FlowResult(row, one, two, h, se)


# --------------------------------------------------------------------------
# domination


def check_domination(nu0: Density, c: float, coeffs: CoefficientModel, mu0: Density, T,
                     checkpoints, cfg: SchemeConfig) -> list[CheckRow]:
    """Evolve nu and mu with the same (frozen) coefficients and report the
    worst cellwise ``nu_t - c mu_t - 1e-6 mu_t`` against ``1e-8``."""
    excess0 = nu0.values - c * mu0.values
    if np.any(excess0 > DOMINATION_ABS):
        i = int(np.argmax(excess0))
        raise InitialDominationFails(
            f"nu0 > c mu0 at x={nu0.grid.centers[i]:.4g} by {excess0[i]:.3g}")
    ts = list(checkpoints)
    nu = solve_linear_fpe(nu0, coeffs, T, cfg, record_times=ts)
    mu = solve_linear_fpe(mu0, coeffs, T, cfg, record_times=ts)
    rows = []
    for t in ts:
        a = nu.at(t).values
        b = mu.at(t).values
        stat = float(np.max(a - c * b - DOMINATION_REL * b))
        rows.append(CheckRow("domination", float(t), stat, DOMINATION_ABS))
    return rows


# --------------------------------------------------------------------------
# sqrt(u) energy


def bulk_one(x):
    return np.ones_like(np.asarray(x, dtype=float))


def smooth_bump(x, half_width=4.0):
    """``exp(1 - 1/(1 - (x/L)^2))`` on ``|x| < L``, zero outside."""
    z = np.asarray(x, dtype=float) / half_width
    out = np.zeros_like(z)
    inside = np.abs(z) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - z[inside] ** 2))
    return out


H_CATALOG = {"one": bulk_one, "bump": smooth_bump}


def sqrt_energy_density(values, grid: SpatialGrid, h=bulk_one, floor=1e-12) -> np.ndarray:
    """Per-slice ``sum_i (Delta_x (sqrt(u) h))^2 / dx``."""
    hx = h(grid.centers) if callable(h) else H_CATALOG[h](grid.centers)
    w = np.sqrt(np.maximum(np.atleast_2d(values), floor)) * hx
    return np.sum(np.diff(w, axis=1) ** 2, axis=1) / grid.dx


def sqrt_energy(u_traj: DensityTrajectory, h=bulk_one, floor=1e-12) -> float:
    """``int_0^T sum_i |Delta_x(sqrt(u) h)|^2 / dx dt`` (trapezoid in time)."""
    e = sqrt_energy_density(u_traj.values, u_traj.grid, h, floor)
    if len(u_traj) == 1:
        return 0.0
    return float(np.trapezoid(e, u_traj.times))


def refinement_series(run, levels=3, h=bulk_one) -> tuple[np.ndarray, np.ndarray, bool]:
    """Energies of ``run(level)`` for ``level = 0..levels-1``; bounded iff
    every successive ratio is at most 1.25."""
    vals = np.array([sqrt_energy(run(k), h) for k in range(levels)])
    ratios = vals[1:] / vals[:-1]
    return vals, ratios, bool(np.all(ratios <= REFINEMENT_RATIO))


def gaussian_energy(var, T) -> float:
    """Exact energy of a frozen ``N(., var)`` over ``[0, T]`` with h = 1."""
    return T / (4.0 * var)


def heat_energy(var0, T, a=1.0) -> float:
    """Exact energy of the heat flow ``var(t) = var0 + a t``."""
    return math.log((var0 + a * T) / var0) / (4.0 * a)
