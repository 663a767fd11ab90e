"""Probabilistic estimators built on exit and entry times.

* Dirichlet problem: ``rho(s, x) = E F(tau, X(tau))`` at the first exit of
  the space-time path from ``(0, T) x D``;
* the representation identity ``int F dmu_T = int rho(0, .) dmu_0``;
* capacity ``E exp(-alpha D_G)`` of open sets via entry times;
* Lyapunov functions: generator residual, maximal tail bound, and the
  supermartingale decay of ``exp(-delta t) V(X_t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import _kernels as K
from .core.coefficients import CoefficientModel
from .core.functions import Lyapunov, boundary_data, lyapunov_function
from .core.grid import SpatialGrid, make_grid, steps_for
from .core.particles import ParticleEnsemble
from .core.rng import RngStream
from .errors import GeneratorBoundFailed, NegativeDiffusion, StartOutsideDomain
from .fpe import SchemeConfig, solve_linear_fpe
from .sde import _pack_args, _seed_args, sample_initial, simulate

WILSON_Z99 = 2.3263478740408408  # one-sided 99% normal quantile


@dataclass
class ExitRecord:
    """Per-path first exit from ``(s, T) x (xl, xr)``.

    ``reason`` is 0 for the side boundary and 1 for the terminal time.
    """

    path_id: np.ndarray
    tau: np.ndarray
    x: np.ndarray
    reason: np.ndarray
    start_clock: float

    @property
    def clock(self) -> np.ndarray:
        return self.start_clock + self.tau

    @property
    def side_fraction(self) -> float:
        return float(np.mean(self.reason == 0))


def simulate_exits(coeffs: CoefficientModel, domain, T, start, n_paths, dt,
                   rng: RngStream) -> ExitRecord:
    s, x0 = start
    xl, xr = (-np.inf, np.inf) if domain is None else map(float, domain)
    if not (0 <= s < T):
        raise StartOutsideDomain(f"start clock {s} not in [0, {T})")
    if not (xl < x0 < xr):
        raise StartOutsideDomain(f"start point {x0} not in ({xl}, {xr})")
    ids = np.arange(n_paths, dtype=np.int64)
    tau = np.empty(n_paths)
    xe = np.empty(n_paths)
    reason = np.empty(n_paths, dtype=np.int64)
    flags = np.zeros(n_paths, dtype=np.int64)
    seed, rep = _seed_args(rng)
    K.exit_kernel(*_pack_args(coeffs), np.full(n_paths, float(x0)), ids, seed, rep,
                  float(s), float(dt), float(T), xl, xr, tau, xe, reason, flags)
    if np.any(flags & K.NEG_DIFFUSION):
        raise NegativeDiffusion("a < 0 met along an exit path")
    return ExitRecord(ids, tau, xe, reason, float(s))


@dataclass
class Estimate:
    value: float
    stderr: float
    n: int
    meta: dict

    def __iter__(self):
        # allows ``rho, se = estimate_...(...)``
        return iter((self.value, self.stderr))


def _mean_se(v) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    if v.size < 2:
        return float(v.mean()), np.nan
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def estimate_hitting_solution(F, coeffs: CoefficientModel, domain, T, start, n_paths, dt,
                              rng: RngStream) -> Estimate:
    """Monte Carlo ``rho(s, x) = E F(s + tau, X(tau))``.

    Exit is detected at the first Euler step landing outside the domain; the
    crossing time is interpolated linearly and no bridge correction is made.
    """
    if isinstance(F, str):
        F = boundary_data(F)
    rec = simulate_exits(coeffs, domain, T, start, n_paths, dt, rng)
    xl, xr = (-np.inf, np.inf) if domain is None else domain
    vals = F(rec.clock, rec.x, xl, xr)
    m, se = _mean_se(vals)
    return Estimate(m, se, n_paths, {"side_exit_fraction": rec.side_fraction,
                                     "mean_tau": float(rec.tau.mean())})


@dataclass
class RepresentationReport:
    mc: float
    mc_stderr: float
    pde: float
    discrepancy: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.discrepancy <= self.tolerance


def verify_representation(F, coeffs: CoefficientModel, T, mu0, n_paths, rng: RngStream,
                          grid: SpatialGrid, pde_cfg: SchemeConfig, dt=1e-3,
                          bias_budget=1e-2) -> RepresentationReport:
    """Compare ``int rho(0, .) dmu0`` (paths started from mu0, D = whole
    line, so ``tau = T``) with ``int F dmu_T`` from the forward PDE."""
    if isinstance(F, str):
        F = boundary_data(F)
    ens = sample_initial(mu0, n_paths, rng)
    bundle = simulate(coeffs, ens, T, dt, rng)
    vals = F(T, bundle.states[:, -1])
    mc, se = _mean_se(vals)
    traj = solve_linear_fpe(mu0.density(grid), coeffs, T, pde_cfg)
    pde = traj.final.expect(lambda x: F(T, x))
    return RepresentationReport(mc, se, pde, abs(mc - pde), 3 * se + bias_budget)


# --------------------------------------------------------------------------
# capacity


def _intervals(G):
    G = [(float(a), float(b)) for a, b in (G or [])]
    for a, b in G:
        if not a < b:
            raise ValueError(f"interval ({a}, {b}) is empty")
    lo = np.array([a for a, _ in G], dtype=float)
    hi = np.array([b for _, b in G], dtype=float)
    return lo, hi


def entry_times(G, coeffs: CoefficientModel, ens: ParticleEnsemble, T_max, dt,
                rng: RngStream) -> np.ndarray:
    """``D_G`` per path (``inf`` if G is not met before ``T_max``)."""
    lo, hi = _intervals(G)
    n = steps_for(T_max, dt)
    out = np.empty(ens.n)
    flags = np.zeros(ens.n, dtype=np.int64)
    seed, rep = _seed_args(rng)
    K.entry_kernel(*_pack_args(coeffs), np.ascontiguousarray(ens.positions), ens.ids, seed,
                   rep, ens.start_clock, float(dt), np.int64(n), lo, hi, out, flags)
    if np.any(flags & K.NEG_DIFFUSION):
        raise NegativeDiffusion("a < 0 met along an entry path")
    return out


def capacity_samples(G, alpha, coeffs, mu0, T_max, n_paths, dt, rng) -> np.ndarray:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    ens = sample_initial(mu0, n_paths, rng)
    d = entry_times(G, coeffs, ens, T_max, dt, rng)
    return np.exp(-alpha * np.minimum(d, T_max))


def estimate_capacity(G, alpha, coeffs: CoefficientModel, mu0, T_max, n_paths, dt,
                      rng: RngStream) -> Estimate:
    """``E exp(-alpha D_G)`` with ``D_G`` the entry time of the open set G
    (a list of intervals). Paths that have not entered by ``T_max`` count
    ``exp(-alpha T_max)``; that is also the bracketing bias bound."""
    v = capacity_samples(G, alpha, coeffs, mu0, T_max, n_paths, dt, rng)
    m, se = _mean_se(v)
    trunc = math.exp(-alpha * T_max)
    return Estimate(m, se, n_paths, {"truncation_bias": trunc,
                                     "not_entered": float(np.mean(v <= trunc))})


BGK_BETA = 0.5826  # -zeta(1/2)/sqrt(2*pi), discrete-monitoring barrier shift


def hunt_capacity_gaussian(interval, alpha, a, mean, var, dt=0.0) -> float:
    """Exact ``E exp(-alpha D_G)`` for ``dX = sqrt(a) dW`` started from
    ``N(mean, var)`` and a single interval G (infinite horizon).

    With ``dt > 0`` both barriers move inward by ``BGK_BETA sqrt(a dt)``,
    the first-order correction for entry detected only at grid times.
    """
    lo, hi = map(float, interval)
    k = math.sqrt(2.0 * alpha / a)
    shift = BGK_BETA * math.sqrt(a * dt)
    L, H = lo + shift, hi - shift
    if L >= H:
        L = H = 0.5 * (lo + hi)
    sd = math.sqrt(var)
    left = math.exp(-k * (L - mean) + 0.5 * k * k * var) * ndtr((lo - mean - k * var) / sd)
    mid = ndtr((hi - mean) / sd) - ndtr((lo - mean) / sd)
    right = math.exp(-k * (mean - H) + 0.5 * k * k * var) * ndtr((mean - hi - k * var) / sd)
    return float(left + mid + right)


# --------------------------------------------------------------------------
# Lyapunov


@dataclass(frozen=True)
class LyapunovSpec:
    V: Lyapunov
    delta: float
    eps: float

    def __post_init__(self):
        if isinstance(self.V, str):
            object.__setattr__(self, "V", lyapunov_function(self.V))
        if not self.delta > 0:
            raise ValueError("delta_V must be positive")
        if not self.eps > 0:
            raise ValueError("epsilon must be positive")

    def check_nonnegative(self, grid: SpatialGrid):
        v = self.V.V(grid.centers)
        if np.any(v < 0):
            raise ValueError(f"V < 0 at x = {grid.centers[np.argmin(v)]:.4g}")


@dataclass
class GeneratorBound:
    worst: float
    t: float
    x: float

    @property
    def passed(self) -> bool:
        return self.worst <= 1e-12


def generator_residual(spec: LyapunovSpec, coeffs: CoefficientModel, t, x):
    a, b = coeffs.ab(t, x)
    V = spec.V
    return b * V.dV(x) + 0.5 * a * V.d2V(x) - spec.delta * V.V(x)


def check_generator_bound(spec: LyapunovSpec, coeffs: CoefficientModel, grid: SpatialGrid,
                          times) -> GeneratorBound:
    """Worst sampled ``b V' + a V''/2 - delta V`` over grid centres x times."""
    spec.check_nonnegative(grid)
    x = grid.centers
    best = (-np.inf, np.nan, np.nan)
    for t in np.atleast_1d(times):
        r = generator_residual(spec, coeffs, float(t), x)
        k = int(np.argmax(r))
        if r[k] > best[0]:
            best = (float(r[k]), float(t), float(x[k]))
    return GeneratorBound(*best)


def _default_check_grid(x0):
    return make_grid(x0 - 10.0, x0 + 10.0, 2000)


def _require_bound(spec, coeffs, T, x0, grid):
    grid = grid or _default_check_grid(x0)
    gb = check_generator_bound(spec, coeffs, grid, np.linspace(0.0, T, 11))
    if not gb.passed:
        raise GeneratorBoundFailed(
            f"L V <= delta V fails: residual {gb.worst:.4g} at t={gb.t:.4g}, x={gb.x:.4g}")
    return gb


def wilson_upper(k, n, z=WILSON_Z99) -> float:
    """One-sided Wilson score upper bound for a binomial proportion."""
    p = k / n
    den = 1 + z * z / n
    centre = p + z * z / (2 * n)
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return min(1.0, (centre + half) / den)


@dataclass
class TailReport:
    p_hat: float
    upper: float
    bound: float
    n: int

    @property
    def passed(self) -> bool:
        return self.upper <= self.bound


def estimate_tail_bound(spec: LyapunovSpec, coeffs: CoefficientModel, start, T, n_paths, dt,
                        rng: RngStream, grid=None) -> TailReport:
    """Empirical ``P(sup_{[0,T]} V(X) >= eps)`` against ``e^{delta T} V(x)/eps``.

    The sup is the running maximum over Euler steps (it can only understate
    the true sup, which is the safe side of a one-sided bound)."""
    s, x0 = start
    _require_bound(spec, coeffs, T, x0, grid)
    ens = ParticleEnsemble(np.full(n_paths, float(x0)), float(s))
    b = simulate(coeffs, ens, T, dt, rng, vpar=spec.V.par)
    hits = int(np.sum(b.meta["vmax"] >= spec.eps))
    bound = math.exp(spec.delta * T) * float(spec.V.V(x0)) / spec.eps
    return TailReport(hits / n_paths, wilson_upper(hits, n_paths), bound, n_paths)


@dataclass
class SupermartingaleReport:
    times: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray
    worst_excess: float  # max over pairs of (m_k - m_j) - 3 se(diff)
    pair: tuple

    @property
    def passed(self) -> bool:
        return self.worst_excess <= 0.0


def check_supermartingale(spec: LyapunovSpec, coeffs: CoefficientModel, start, T, n_paths,
                          checkpoints, dt, rng: RngStream, grid=None) -> SupermartingaleReport:
    """``m(t) = E e^{-delta t} V(X_t)`` must not increase beyond 3 stderr of
    the paired difference between any two checkpoints (t = 0 included)."""
    s, x0 = start
    _require_bound(spec, coeffs, T, x0, grid)
    ts = sorted({0.0, *map(float, checkpoints)})
    if ts[-1] > T + 1e-12:
        raise ValueError("checkpoint beyond T")
    ens = ParticleEnsemble(np.full(n_paths, float(x0)), float(s))
    b = simulate(coeffs, ens, T, dt, rng, record_times=ts)
    W = np.column_stack([math.exp(-spec.delta * t) * spec.V.V(b.at(t)) for t in ts])
    means = W.mean(axis=0)
    ses = W.std(axis=0, ddof=1) / math.sqrt(n_paths)
    worst, pair = -np.inf, (0, 0)
    for j in range(len(ts)):
        for k in range(j + 1, len(ts)):
            d = W[:, k] - W[:, j]
            se = d.std(ddof=1) / math.sqrt(n_paths)
            ex = d.mean() - 3 * se
            if ex > worst:
                worst, pair = float(ex), (ts[j], ts[k])
    return SupermartingaleReport(np.array(ts), means, ses, worst, pair)


# --------------------------------------------------------------------------
# export


def write_estimates_csv(rows, path):
    """Rows of ``(quantity, estimate, stderr, bound, verdict)``."""
    with open(path, "w", newline="\n") as fh:
        fh.write("quantity,estimate,stderr,bound,verdict\n")
        for q, est, se, bound, verdict in rows:
            fh.write(f"{q},{est:.17g},{se:.17g},{bound:.17g},{verdict}\n")
