"""Diffusions perturbed by a bounded jump kernel.

Jumps are simulated by thinning: candidate ticks of a rate-``lam`` Poisson
clock are accepted with probability ``c(x)/lam`` and displace the path by a
draw from ``q``. Jump and diffusion noise live on disjoint substreams, so a
zero kernel reproduces the pure diffusion paths bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as Kn
from .core.coefficients import CoefficientModel
from .core.functions import integrand, integrand_sup
from .core.grid import SpatialGrid, steps_for
from .core.jump_kernel import NO_JUMPS, JumpKernel, jump_kernel  # noqa: F401
from .core.particles import EventLog, ParticleEnsemble, PathBundle
from .core.rng import RngStream
from .errors import DominationViolated, NegativeDiffusion, UnknownPsi
from .fpe import SchemeConfig, solve_perturbed_fpe
from .io import write_csv
from .sde import SimConfig, _pack_args, _record_offsets, _seed_args, sample_initial
from .verify import CheckRow, check_superposition

RESOLVENT_DEPTH = 3

# psi(x, y) with psi(y, y) = 0, and the index of the matching q moment
PSI_CATALOG = {
    "one": (lambda x, y: (y != x).astype(float), 0),
    "increment": (lambda x, y: y - x, 1),
    "sq_increment": (lambda x, y: (y - x) ** 2, 2),
    "abs_increment": (lambda x, y: np.abs(y - x), 3),
}


def psi_function(psi_id: str):
    try:
        return PSI_CATALOG[psi_id]
    except KeyError:
        raise UnknownPsi(f"unknown psi {psi_id!r}; known: {sorted(PSI_CATALOG)}") from None


def _check_domination(K: JumpKernel):
    if K.lam < K.sup_rate * (1 - 1e-12):
        raise DominationViolated(f"thinning rate {K.lam} below sup c = {K.sup_rate}")


def simulate_jump_process(coeffs: CoefficientModel, K: JumpKernel, init, cfg: SimConfig,
                          rng: RngStream | None = None) -> PathBundle:
    """Euler-Maruyama diffusion plus thinned jumps over ``[0, cfg.T]``.

    ``init`` is a ParticleEnsemble or an initial law (sampled with
    ``cfg.N``). Ticks falling inside a step are applied after that step's
    diffusion move; the logged event time is the exact tick time.
    """
    rng = rng or cfg.rng
    _check_domination(K)
    ens = init if isinstance(init, ParticleEnsemble) else sample_initial(init, cfg.N, rng)
    if ens.dim != 1:
        raise ValueError("jump simulation is one-dimensional")
    n = steps_for(cfg.T, cfg.dt)
    rec = _record_offsets(n, cfg.dt, cfg.record_times, cfg.record_full_paths)
    cpar, lam, qkind, qpar = K.kernel_args()
    mean_ticks = lam * cfg.T
    cap = int(mean_ticks + 10 * math.sqrt(mean_ticks) + 16)
    seed, rep = _seed_args(rng)
    x0 = np.ascontiguousarray(ens.positions)
    while True:
        states = np.empty((ens.n, rec.size))
        ev_t = np.empty((ens.n, cap))
        ev_pre = np.empty((ens.n, cap))
        ev_post = np.empty((ens.n, cap))
        ev_n = np.zeros(ens.n, dtype=np.int64)
        disc = np.empty(ens.n)
        flags = np.zeros(ens.n, dtype=np.int64)
        Kn.jump_kernel(*_pack_args(coeffs), x0, ens.ids, seed, rep, ens.start_clock, cfg.dt,
                       np.int64(n), rec, states, cpar, lam, np.int64(qkind), qpar, ev_t, ev_pre,
                       ev_post, ev_n, 0.0, np.zeros(3), disc, flags)
        if np.any(flags & Kn.NEG_DIFFUSION):
            raise NegativeDiffusion("a < 0 met during jump simulation")
        if np.any(flags & Kn.DOMINATION):
            raise DominationViolated(f"sampled c(x) exceeded the thinning rate {lam}")
        if not np.any(flags & Kn.EVENT_OVERFLOW):
            break
        cap *= 2
    mask = np.arange(cap)[None, :] < ev_n[:, None]
    events = EventLog(np.repeat(ens.ids, ev_n), ev_t[mask], ev_pre[mask], ev_post[mask])
    return PathBundle(ens.start_clock, cfg.dt, n, rec, states, ens.ids, events=events,
                      meta={"kernel": K})


def interarrival_times(events: EventLog, path_index) -> np.ndarray:
    """Gaps between successive events of each path (first gap from 0)."""
    out = []
    for p in np.unique(path_index):
        t = np.sort(events.t[events.path_id == p])
        out.append(np.diff(np.concatenate([[0.0], t])))
    return np.concatenate(out) if out else np.zeros(0)


# --------------------------------------------------------------------------
# compensator


@dataclass
class CompensatorReport:
    psi: str
    t: float
    lhs: float
    rhs: float
    stderr: float

    @property
    def passed(self) -> bool:
        return abs(self.lhs - self.rhs) <= 3 * self.stderr

    def row(self) -> CheckRow:
        return CheckRow(f"compensator_{self.psi}", self.t, abs(self.lhs - self.rhs),
                        3 * self.stderr)


def check_jump_compensator(bundle: PathBundle, K: JumpKernel, psi_id: str, t: float
                           ) -> CompensatorReport:
    """Path averages of ``sum_{r <= t} psi(X(r-), X(r))`` and of the
    left-point quadrature of ``c(X) int psi(X, X + y) q(dy)``; stderr is that
    of the per-path difference."""
    psi, mom = psi_function(psi_id)
    n_t = steps_for(t, bundle.dt)
    rs = bundle.record_steps
    if rs.size < n_t + 1 or not np.array_equal(rs[: n_t + 1], np.arange(n_t + 1)):
        raise ValueError("the compensator check needs full path recording up to t")
    ev = bundle.events or EventLog.empty()
    idx = np.searchsorted(bundle.ids, ev.path_id)
    if not np.array_equal(bundle.ids, np.sort(bundle.ids)):
        idx = np.argsort(bundle.ids)[np.searchsorted(np.sort(bundle.ids), ev.path_id)]
    sel = ev.t <= bundle.start_clock + t + 1e-12
    lhs = np.bincount(idx[sel], weights=psi(ev.x_pre[sel], ev.x_post[sel]),
                      minlength=bundle.n_paths)
    Psi = K.q_moments()[mom]
    rhs = Psi * K.rate(bundle.states[:, :n_t]).sum(axis=1) * bundle.dt
    d = lhs - rhs
    se = float(d.std(ddof=1) / math.sqrt(d.size))
    return CompensatorReport(psi_id, float(t), float(lhs.mean()), float(rhs.mean()), se)


# --------------------------------------------------------------------------
# resolvent identity


@dataclass
class ResolventReport:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    budget: float  # truncation in time plus Neumann tail
    levels_mean: float

    @property
    def stderr(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def threshold(self) -> float:
        return 3 * self.stderr + self.budget

    @property
    def passed(self) -> bool:
        return abs(self.lhs - self.rhs) <= self.threshold

    def row(self, alpha) -> CheckRow:
        return CheckRow("resolvent", alpha, abs(self.lhs - self.rhs), self.threshold)


def resolvent_budget(fpar, alpha, lam, T_max, depth=RESOLVENT_DEPTH) -> float:
    """``|f| e^{-alpha T}/alpha`` (finite horizon) plus the geometric tail
    ``|f| (alpha+lam)/alpha^2 r^{depth+1}`` with ``r = lam/(alpha+lam)``,
    the bound on the omitted restarts (``|U'K| <= r``)."""
    fs = integrand_sup(fpar)
    r = lam / (alpha + lam)
    horizon = fs * math.exp(-alpha * T_max) / alpha
    return float(horizon + fs * (alpha + lam) / alpha**2 * r ** (depth + 1))


def check_resolvent_identity(coeffs: CoefficientModel, K: JumpKernel, f_id, alpha, x0, n_paths,
                             T_max, dt, rng: RngStream, depth=RESOLVENT_DEPTH) -> ResolventReport:
    """``U^K f(x)`` from jump paths against ``U'f + U'K U'f + ...`` from the
    killed diffusion with restarts at the first jump (``depth`` restarts)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    _check_domination(K)
    fpar = integrand(f_id) if isinstance(f_id, str) else np.asarray(f_id, dtype=float)
    n = steps_for(T_max, dt)
    cpar, lam, qkind, qpar = K.kernel_args()
    seed, rep = _seed_args(rng)
    ids = np.arange(n_paths, dtype=np.int64)
    x = np.full(n_paths, float(x0))
    pack = _pack_args(coeffs)
    # U^K f along jump paths (no recording beyond the endpoints)
    rec = np.array([0, n], dtype=np.int64)
    states = np.empty((n_paths, 2))
    cap = 1
    ev = [np.empty((n_paths, cap)) for _ in range(3)]
    ev_n = np.zeros(n_paths, dtype=np.int64)
    disc = np.empty(n_paths)
    flags = np.zeros(n_paths, dtype=np.int64)
    Kn.jump_kernel(*pack, x, ids, seed, rep, 0.0, float(dt), np.int64(n), rec, states, cpar,
                   lam, np.int64(qkind), qpar, ev[0], ev[1], ev[2], ev_n, float(alpha), fpar,
                   disc, flags)
    if np.any(flags & Kn.DOMINATION):
        raise DominationViolated("sampled c(x) exceeded the thinning rate")
    # Neumann chain on independent substreams
    val = np.empty(n_paths)
    levels = np.empty(n_paths, dtype=np.int64)
    flags2 = np.zeros(n_paths, dtype=np.int64)
    Kn.resolvent_chain_kernel(*pack, x, ids, seed, rep, 0.0, float(dt), np.int64(n), cpar, lam,
                              np.int64(qkind), qpar, float(alpha), fpar, np.int64(depth), val,
                              levels, flags2)
    if np.any((flags | flags2) & Kn.NEG_DIFFUSION):
        raise NegativeDiffusion("a < 0 met in the resolvent check")
    lam_eff = K.sup_rate
    budget = resolvent_budget(fpar, alpha, lam_eff, T_max, depth)
    return ResolventReport(float(disc.mean()), float(disc.std(ddof=1) / math.sqrt(n_paths)),
                           float(val.mean()), float(val.std(ddof=1) / math.sqrt(n_paths)),
                           budget, float(levels.mean()))


# --------------------------------------------------------------------------
# marginals


def verify_jump_fpe_marginals(coeffs: CoefficientModel, K: JumpKernel, init_law, T, n_paths,
                              grid: SpatialGrid, checkpoints, dt, pde_cfg: SchemeConfig,
                              rng: RngStream, bandwidth=0.0) -> list[CheckRow]:
    """W1 between KDE marginals of the jump simulator and the perturbed FPE
    at each checkpoint (threshold ``3 * bootstrap stderr + 2 dx``)."""
    cps = [float(t) for t in checkpoints]
    cfg = SimConfig(N=n_paths, dt=dt, T=T, seed=rng.seed, replicate=rng.replicate,
                    record_times=tuple(cps))
    bundle = simulate_jump_process(coeffs, K, init_law, cfg, rng)
    traj = solve_perturbed_fpe(init_law.density(grid), coeffs, K, T, pde_cfg, record_times=cps)
    return check_superposition(traj, bundle, cps, bandwidth, rng, name="jump_marginal")


def write_events_csv(events: EventLog, path):
    write_csv(path, ["path_id", "t", "x_pre", "x_post"],
              [events.path_id, events.t, events.x_pre, events.x_post])
