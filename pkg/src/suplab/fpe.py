"""Finite-volume solvers for Fokker-Planck equations on a 1-D window.

The forward equation is written in conservation form

    du/dt = -dF/dx,   F = b u - (1/2) d(a u)/dx,

with ``a`` sampled at cell centres, ``b`` at interior faces (upwinded), and
zero flux through the window edges. The resulting generator matrix ``A`` is
tridiagonal with nonnegative off-diagonals and zero column sums, so both the
explicit step ``I + dt A`` (under the CFL bound) and the implicit step
``(I - dt A)^{-1}`` preserve mass and positivity. The backward (Kolmogorov)
solver uses the transposed matrices, which makes the discrete duality
``sum rho(0) u0 = sum F u(T)`` hold to rounding on the full window.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .core.coefficients import CoefficientModel, PorousMedia
from .core.functions import BoundaryData, boundary_data
from .core.grid import Density, DensityTrajectory, SpatialGrid, steps_for
from .core.jump_kernel import JumpKernel
from .errors import (
    CflViolation,
    CheckpointOutsideTrajectory,
    MassDrift,
    NegativeDiffusion,
    NegativeDensity,
    NonmonotoneBeta,
    NotNormalized,
)
from .io import write_csv

log = logging.getLogger(__name__)

# automatic save stride keeps at most this many stored slices
MAX_SLICES = 2001
CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class SchemeConfig:
    """Time stepping for the finite-volume solvers.

    ``theta = 0`` is forward Euler (subject to the CFL bound
    ``dt * max|A_ii| <= 1``, which is ``dt <= dx^2 / max a`` without drift);
    ``theta = 1`` is backward Euler for drift and diffusion alike.
    ``save_every`` is the stride of stored slices; ``None`` picks the
    smallest stride that keeps at most ``MAX_SLICES`` slices.
    """

    dt: float
    theta: int = 1
    mass_tol: float = 1e-8
    save_every: int | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.theta not in (0, 1):
            raise ValueError("theta must be 0 (explicit) or 1 (implicit)")
        if self.save_every is not None and self.save_every < 1:
            raise ValueError("save_every must be >= 1")

    def stride(self, n_steps: int) -> int:
        if self.save_every is not None:
            return self.save_every
        return max(1, -(-n_steps // (MAX_SLICES - 1)))


def cfl_bound(a_max: float, dx: float, b_max: float = 0.0) -> float:
    """Largest explicit ``dt`` for diffusion ``a_max`` and drift ``b_max``."""
    rate = a_max / dx**2 + b_max / dx
    return np.inf if rate == 0 else 1.0 / rate


# --------------------------------------------------------------------------
# assembly


def generator_band(a_c, b_f, dx) -> np.ndarray:
    """Banded ``(3, n)`` storage (scipy ``solve_banded`` layout) of the
    forward generator for centre diffusion ``a_c`` and face drift ``b_f``."""
    n = a_c.size
    wl = (np.maximum(b_f, 0.0) + a_c[:-1] / (2 * dx)) / dx
    wr = (np.minimum(b_f, 0.0) - a_c[1:] / (2 * dx)) / dx
    ab = np.zeros((3, n))
    ab[1, :-1] -= wl
    ab[1, 1:] += wr
    ab[0, 1:] = -wr  # A[i, i+1]
    ab[2, :-1] = wl  # A[i+1, i]
    return ab


def band_transpose(ab) -> np.ndarray:
    out = np.zeros_like(ab)
    out[1] = ab[1]
    out[0, 1:] = ab[2, :-1]
    out[2, :-1] = ab[0, 1:]
    return out


def band_matvec(ab, u) -> np.ndarray:
    out = ab[1] * u
    out[:-1] += ab[0, 1:] * u[1:]
    out[1:] += ab[2, :-1] * u[:-1]
    return out


def _implicit_solve(ab, dt, rhs):
    m = -dt * ab
    m[1] += 1.0
    return solve_banded((1, 1), m, rhs, overwrite_ab=True, check_finite=False)


def _check_cfl(ab, dt, what="time.dt"):
    worst = float(np.max(-ab[1])) if ab.size else 0.0
    if dt * worst > 1.0 + 1e-12:
        raise CflViolation(
            f"{what}: explicit step dt={dt:g} exceeds the stability bound {1.0 / worst:.6g}"
        )


class _Stepper:
    """Evaluates the generator of a linear model, caching it when the
    coefficients do not depend on time."""

    def __init__(self, coeffs: CoefficientModel, grid: SpatialGrid):
        self.coeffs = coeffs
        self.grid = grid
        self.static = not coeffs.time_dependent
        self._cache = None
        self.faces = np.ascontiguousarray(grid.faces[1:-1])

    def band(self, t):
        if self.static and self._cache is not None:
            return self._cache
        a = self.coeffs.a(t, self.grid.centers)
        b = self.coeffs.b(t, self.faces)
        if np.any(a < 0):
            raise NegativeDiffusion(f"a < 0 at t={t}")
        ab = generator_band(a, b, self.grid.dx)
        if self.static:
            self._cache = ab
        return ab


# --------------------------------------------------------------------------
# forward solvers


class _Recorder:
    """Stores slices every ``stride`` steps, at forced times and at T;
    applies the positivity clamp and the mass check."""

    def __init__(self, u0: Density, n_steps, dt, cfg: SchemeConfig, record_times=()):
        self.dt = dt
        self.n = n_steps
        self.cfg = cfg
        self.stride = cfg.stride(n_steps)
        self.forced = set()
        for t in record_times:
            k = int(round(t / dt))
            if abs(k * dt - t) > 1e-9 * max(1.0, t) or not 0 <= k <= n_steps:
                raise CheckpointOutsideTrajectory(f"record time {t} is not a step of dt={dt}")
            self.forced.add(k)
        m = u0.mass
        if abs(m - 1.0) > 1e-6:
            raise NotNormalized(f"initial density has mass {m:.9g}, expected 1")
        self.mass0 = m
        self.times = [0.0]
        self.values = [u0.values.copy()]
        self.max_clamp = 0.0
        self._dx = u0.grid.dx

    def check(self, u, k):
        neg = u < 0
        if np.any(neg):
            worst = float(-u[neg].min())
            if worst > CLAMP_TOL:
                raise NegativeDensity(f"value {-worst:.3g} at step {k}")
            self.max_clamp = max(self.max_clamp, worst)
            u = np.where(neg, 0.0, u)
            u *= self.mass0 / (u.sum() * self._dx)
        drift = abs(u.sum() * self._dx - self.mass0)
        if drift > self.cfg.mass_tol:
            raise MassDrift(f"mass drifted by {drift:.3g} at step {k}")
        return u

    def push(self, u, k):
        if k % self.stride == 0 or k == self.n or k in self.forced:
            self.times.append(k * self.dt)
            self.values.append(u.copy())

    def trajectory(self, grid, meta) -> DensityTrajectory:
        meta = dict(meta, dt=self.dt, theta=self.cfg.theta, max_clamp=self.max_clamp,
                    save_every=self.stride)
        if self.max_clamp > 0:
            log.info("positivity clamp used, largest magnitude %.3g", self.max_clamp)
        return DensityTrajectory(grid, np.array(self.times), np.array(self.values), meta=meta)


def _run_linear(u0, stepper, T, cfg, record_times, jump=None, meta=None):
    grid = u0.grid
    n = steps_for(T, cfg.dt)
    dt = cfg.dt
    rec = _Recorder(u0, n, dt, cfg, record_times)
    u = u0.values.copy()
    for k in range(n):
        if jump is not None:
            u = u + dt * jump(u)
        if cfg.theta == 0:
            ab = stepper.band(k * dt)
            _check_cfl(ab, dt)
            u = u + dt * band_matvec(ab, u)
        else:
            u = _implicit_solve(stepper.band((k + 1) * dt), dt, u)
        u = rec.check(u, k + 1)
        rec.push(u, k + 1)
    return rec.trajectory(grid, meta or {})


def solve_linear_fpe(u0: Density, coeffs: CoefficientModel, T: float, cfg: SchemeConfig,
                     record_times=()) -> DensityTrajectory:
    """Forward equation ``du/dt = (1/2)(a u)'' - (b u)'`` from ``u0`` to T."""
    stepper = _Stepper(coeffs, u0.grid)
    return _run_linear(u0, stepper, T, cfg, record_times,
                       meta={"scheme": "linear", "model": coeffs.name})


def solve_perturbed_fpe(u0: Density, coeffs: CoefficientModel, K: JumpKernel, T: float,
                        cfg: SchemeConfig, record_times=()) -> DensityTrajectory:
    """Forward equation with the adjoint jump term
    ``u -> int K(y, x) u(y) dy - c(x) u(x)`` added explicitly (the diffusion
    part keeps ``cfg.theta``). Requires ``dt * sup c <= 1``."""
    grid = u0.grid
    c_max = K.check_bounded(grid)
    stepper = _Stepper(coeffs, grid)
    if K.is_zero:
        return _run_linear(u0, stepper, T, cfg, record_times,
                           meta={"scheme": "perturbed", "model": coeffs.name})
    if cfg.dt * c_max > 1.0:
        raise CflViolation(f"time.dt: dt * sup c = {cfg.dt * c_max:.3g} > 1 for the jump term")
    c = K.rate(grid.centers)
    PT = np.ascontiguousarray(K.transfer_matrix(grid).T)

    def jump(u):
        cu = c * u
        return PT @ cu - cu

    return _run_linear(u0, stepper, T, cfg, record_times, jump=jump,
                       meta={"scheme": "perturbed", "model": coeffs.name})


def check_beta(porous: PorousMedia, r_max: float, n=1001):
    """Spot check of ``beta_r > 0`` on ``[0, r_max]``; returns min beta_r."""
    r = np.linspace(0.0, max(r_max, 1e-12), n)
    br = porous.beta_r(r)
    k = int(np.argmin(br))
    if br[k] <= 0:
        raise NonmonotoneBeta(f"beta_r({r[k]:.4g}) = {br[k]:.4g} <= 0 for beta {porous.beta_id!r}")
    return float(br[k])


def porous_band(porous: PorousMedia, u, grid: SpatialGrid):
    """Generator with the Nemytskii quotient frozen at ``u``."""
    a = porous.a_of_density(u)
    um = 0.5 * (u[:-1] + u[1:])
    xf = grid.faces[1:-1]
    b = porous.drift_of_density(xf, um)
    return generator_band(a, b, grid.dx)


def solve_porous_media(u0: Density, porous: PorousMedia, T: float, cfg: SchemeConfig,
                       record_times=()) -> DensityTrajectory:
    """``du/dt = (beta(u))'' - (D b(u) u)'`` by a semi-implicit scheme.

    Each step freezes the quotient ``a = 2 beta(u^n)/u^n`` and the drift
    ``D b(u^n)`` at the previous slice and solves the resulting linear
    implicit system, so every step is positive and mass conserving; for
    ``beta(r) = r`` this is exactly the linear solver with ``a = 2``.
    ``cfg.theta`` is ignored (always implicit).
    """
    if isinstance(porous, str):
        porous = PorousMedia(porous)
    grid = u0.grid
    check_beta(porous, float(u0.values.max()))
    n = steps_for(T, cfg.dt)
    dt = cfg.dt
    rec = _Recorder(u0, n, dt, cfg, record_times)
    u = u0.values.copy()
    for k in range(n):
        u = _implicit_solve(porous_band(porous, u, grid), dt, u)
        u = rec.check(u, k + 1)
        rec.push(u, k + 1)
    traj = rec.trajectory(grid, {"scheme": "porous", "beta": porous.beta_id,
                                 "D": porous.D_id, "b": porous.b_id})
    check_beta(porous, float(traj.values.max()))
    return traj


# --------------------------------------------------------------------------
# backward equation


@dataclass
class BackwardField:
    """``rho(t_k, x_i)`` for the Dirichlet problem on ``(0, T) x (xl, xr)``."""

    grid: SpatialGrid
    times: np.ndarray
    values: np.ndarray
    domain: tuple
    F: BoundaryData
    meta: dict = field(default_factory=dict)

    def slice_at(self, t) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) <= 1e-9 * max(1.0, abs(t)):
            return self.values[k]
        if t < self.times[0] or t > self.times[-1]:
            raise CheckpointOutsideTrajectory(f"t={t} outside the solved window")
        k = int(np.searchsorted(self.times, t)) - 1
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return (1 - w) * self.values[k] + w * self.values[k + 1]

    def at(self, t, x):
        """Value at ``(t, x)``: linear in x between cell centres, linear in t."""
        return np.interp(x, self.grid.centers, self.slice_at(t))

    def pair(self, u0: Density, uT: Density) -> tuple[float, float]:
        """``(sum rho(0) u0 dx, sum F(T) u(T) dx)``."""
        g = self.grid
        lhs = float(np.sum(self.slice_at(0.0) * u0.values) * g.dx)
        fT = self.F(self.times[-1], g.centers, *self.domain)
        rhs = float(np.sum(fT * uT.values) * g.dx)
        return lhs, rhs


def solve_backward_kolmogorov(F, coeffs: CoefficientModel, domain, T: float,
                              cfg: SchemeConfig, grid: SpatialGrid,
                              record_times=()) -> BackwardField:
    """Solve ``d rho/dt + L_t rho = 0`` backward from ``rho(T) = F(T)`` with
    ``rho = F`` outside the open interval ``domain``.

    The step from ``t_{n+1}`` to ``t_n`` applies the transpose of the
    forward step from ``t_n`` to ``t_{n+1}``; cells whose centres lie outside
    the domain are Dirichlet rows. ``domain=None`` means the whole window
    (zero-flux edges, no Dirichlet cells).
    """
    if isinstance(F, str):
        F = boundary_data(F)
    xl, xr = (-np.inf, np.inf) if domain is None else map(float, domain)
    if domain is not None and not (grid.x_min <= xl < xr <= grid.x_max):
        raise ValueError(f"domain ({xl}, {xr}) must lie inside the grid window")
    x = grid.centers
    out = (x <= xl) | (x >= xr)
    n = steps_for(T, cfg.dt)
    dt = cfg.dt
    stride = cfg.stride(n)
    forced = {int(round(t / dt)) for t in record_times}
    stepper = _Stepper(coeffs, grid)
    rho = np.asarray(F(T, x, xl, xr), dtype=float).copy()
    times, values = [T], [rho.copy()]
    for k in range(n - 1, -1, -1):
        t = k * dt
        if cfg.theta == 0:
            ab = stepper.band(t)
            _check_cfl(ab, dt)
            rho = rho + dt * band_matvec(band_transpose(ab), rho)
            rho[out] = F(t, x[out], xl, xr)
        else:
            m = -dt * band_transpose(stepper.band(t + dt))
            m[1] += 1.0
            rhs = rho.copy()
            if np.any(out):
                idx = np.nonzero(out)[0]
                m[1, idx] = 1.0
                up = idx[idx + 1 < grid.n_cells]
                m[0, up + 1] = 0.0
                lo = idx[idx > 0]
                m[2, lo - 1] = 0.0
                rhs[out] = F(t, x[out], xl, xr)
            rho = solve_banded((1, 1), m, rhs, overwrite_ab=True, check_finite=False)
        if k % stride == 0 or k in forced:
            times.append(t)
            values.append(rho.copy())
    order = np.argsort(times)
    return BackwardField(grid, np.array(times)[order], np.array(values)[order],
                         (xl, xr), F, meta={"dt": dt, "theta": cfg.theta})


# --------------------------------------------------------------------------
# export


def write_trajectory_csv(traj: DensityTrajectory, path, times=None):
    """Long-format ``t,x,u`` CSV; ``times`` selects stored slices."""
    ks = range(len(traj)) if times is None else [traj.index_of(t) for t in times]
    x = traj.grid.centers
    tt, xx, uu = [], [], []
    for k in ks:
        tt.append(np.full(x.size, traj.times[k]))
        xx.append(x)
        uu.append(traj.values[k])
    write_csv(path, ["t", "x", "u"], [np.concatenate(tt), np.concatenate(xx), np.concatenate(uu)])
