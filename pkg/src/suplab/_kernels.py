"""Compiled path-major simulation kernels.

Each kernel loops over paths in parallel and over time steps sequentially.
A path's randomness comes only from its own counter-based streams
(``core.rng``), and each kernel writes per-path outputs, so results are
bit-identical for any thread count. All reductions happen in numpy after the
kernel returns.

Conventions shared by every kernel:

* step ``k`` of a path runs from clock ``s + k*dt`` to ``s + (k+1)*dt``;
* the diffusion normal for step ``k`` is ``normal_at(.., DIFFUSION, id, k)``;
* jump tick ``j`` uses uniform block ``j`` of the JUMP substream:
  ``u0`` inter-arrival, ``u1`` acceptance, ``u2, u3`` displacement.
"""

from __future__ import annotations

import math

import numpy as np

from . import _threads  # noqa: F401
from numba import njit, prange

from .core.coefficients import coef_ab
from .core.rng import DIFFUSION, JUMP, det_cos_sin_turn, det_log, normal4, uniform4

# flags
OK = 0
NEG_DIFFUSION = 1
DOMINATION = 2
EVENT_OVERFLOW = 4

# displacement kinds
Q_GAUSSIAN = 0
Q_TWO_POINT = 1
Q_UNIFORM = 2
Q_SHIFT = 3



@njit(inline="always", cache=True)
def em_update(x, a, b, dt, z):
    return x + b * dt + math.sqrt(a * dt) * z


@njit(inline="always", cache=True)
def lyap_v(vpar, x):
    v = vpar[0] + vpar[2] * x * x
    if vpar[1] != 0.0:
        v += vpar[1] * math.log1p(x * x)
    return v


@njit(inline="always", cache=True)
def rate_c(cpar, x):
    return cpar[0] + cpar[1] * math.exp(-x * x)


@njit(inline="always", cache=True)
def bump_f(fpar, x):
    return fpar[0] + fpar[1] * math.exp(-fpar[2] * x * x)


@njit(inline="always", cache=True)
def displacement(qkind, qpar, u2, u3):
    if qkind == 0:
        c, _ = det_cos_sin_turn(u3)
        return qpar[0] + qpar[1] * math.sqrt(-2.0 * det_log(u2)) * c
    if qkind == 1:
        if u2 <= qpar[2]:
            return qpar[0]
        return qpar[1]
    if qkind == 2:
        return qpar[0] + (qpar[1] - qpar[0]) * u2
    return qpar[0]


@njit(parallel=True, cache=True)
def em_step_kernel(kind, par, tt, ta, tb, x0g, dxg, xs, ids, seed, rep, clock, dt, index,
                   out, flags):
    for i in prange(xs.shape[0]):
        a, b = coef_ab(kind, par, tt, ta, tb, x0g, dxg, clock, xs[i])
        if a < 0.0:
            flags[i] = NEG_DIFFUSION
            out[i] = xs[i]
            continue
        z0, z1, z2, z3 = normal4(seed, rep, DIFFUSION, ids[i], index // 4)
        j = index % 4
        z = z0 if j == 0 else (z1 if j == 1 else (z2 if j == 2 else z3))
        out[i] = em_update(xs[i], a, b, dt, z)


@njit(parallel=True, cache=True)
def em_step_kernel_2d(kind, par, tt, ta, tb, x0g, dxg, xs, ids, seed, rep, clock, dt, index,
                      out, flags):
    # diagonal diffusion, same scalar law per coordinate; coordinate c of
    # step k uses normal index 2k + c
    for i in prange(xs.shape[0]):
        for c in range(2):
            a, b = coef_ab(kind, par, tt, ta, tb, x0g, dxg, clock, xs[i, c])
            if a < 0.0:
                flags[i] = NEG_DIFFUSION
                out[i, c] = xs[i, c]
                continue
            idx = 2 * index + c
            z0, z1, z2, z3 = normal4(seed, rep, DIFFUSION, ids[i], idx // 4)
            j = idx % 4
            z = z0 if j == 0 else (z1 if j == 1 else (z2 if j == 2 else z3))
            out[i, c] = em_update(xs[i, c], a, b, dt, z)


@njit(parallel=True, cache=True)
def simulate_kernel(kind, par, tt, ta, tb, x0g, dxg, x0, ids, seed, rep, s, dt, step0,
                    n_steps, rec, out_states, vpar, out_vmax, lo, hi, out_escaped, flags):
    """Free-flight Euler-Maruyama; records states at step offsets ``rec``
    (sorted, relative to ``step0``), tracks the running max of a parametric
    V and whether the path ever left ``[lo, hi]``."""
    n_rec = rec.shape[0]
    for i in prange(x0.shape[0]):
        x = x0[i]
        pid = ids[i]
        r = 0
        while r < n_rec and rec[r] == 0:
            out_states[i, r] = x
            r += 1
        vmax = lyap_v(vpar, x)
        esc = x < lo or x > hi
        blk = -1
        z0 = z1 = z2 = z3 = 0.0
        for k in range(n_steps):
            step = step0 + k
            t = s + step * dt
            a, b = coef_ab(kind, par, tt, ta, tb, x0g, dxg, t, x)
            if a < 0.0:
                flags[i] = NEG_DIFFUSION
                break
            if step // 4 != blk:
                blk = step // 4
                z0, z1, z2, z3 = normal4(seed, rep, DIFFUSION, pid, blk)
            j = step % 4
            z = z0 if j == 0 else (z1 if j == 1 else (z2 if j == 2 else z3))
            x = em_update(x, a, b, dt, z)
            v = lyap_v(vpar, x)
            if v > vmax:
                vmax = v
            if x < lo or x > hi:
                esc = True
            while r < n_rec and rec[r] == k + 1:
                out_states[i, r] = x
                r += 1
        while r < n_rec:
            out_states[i, r] = x
            r += 1
        out_vmax[i] = vmax
        out_escaped[i] = esc


@njit(parallel=True, cache=True)
def exit_kernel(kind, par, tt, ta, tb, x0g, dxg, x0, ids, seed, rep, s, dt, T, xl, xr,
                out_tau, out_x, out_reason, flags):
    """First exit from ``(s, T) x (xl, xr)``.

    The first step that lands outside ``(xl, xr)`` triggers exit; the
    crossing time is interpolated linearly and the exit position is the
    crossed boundary point. A last partial step reaches ``T`` exactly.
    Reason 0 = side boundary, 1 = terminal time.
    """
    horizon = T - s
    n_full = int(math.floor(horizon / dt + 1e-9))
    rem = horizon - n_full * dt
    if rem < 1e-12 * max(1.0, horizon):
        rem = 0.0
    n_total = n_full + (1 if rem > 0.0 else 0)
    for i in prange(x0.shape[0]):
        x = x0[i]
        pid = ids[i]
        blk = -1
        z0 = z1 = z2 = z3 = 0.0
        done = False
        for k in range(n_total):
            h = dt if k < n_full else rem
            t = s + k * dt
            a, b = coef_ab(kind, par, tt, ta, tb, x0g, dxg, t, x)
            if a < 0.0:
                flags[i] = NEG_DIFFUSION
                a = 0.0
            if k // 4 != blk:
                blk = k // 4
                z0, z1, z2, z3 = normal4(seed, rep, DIFFUSION, pid, blk)
            j = k % 4
            z = z0 if j == 0 else (z1 if j == 1 else (z2 if j == 2 else z3))
            xn = em_update(x, a, b, h, z)
            if xn <= xl or xn >= xr:
                bnd = xl if xn <= xl else xr
                theta = (bnd - x) / (xn - x)
                out_tau[i] = k * dt + theta * h
                out_x[i] = bnd
                out_reason[i] = 0
                done = True
                break
            x = xn
        if not done:
            out_tau[i] = horizon
            out_x[i] = x
            out_reason[i] = 1


@njit(inline="always", cache=True)
def _inside(glo, ghi, x):
    for g in range(glo.shape[0]):
        if glo[g] < x < ghi[g]:
            return True
    return False


@njit(inline="always", cache=True)
def _segment_entry(glo, ghi, x, xn):
    """First point of the open set met by the segment x -> xn (x outside);
    NaN if none."""
    best = np.nan
    if xn > x:
        for g in range(glo.shape[0]):
            if glo[g] >= x and glo[g] < xn and ghi[g] > glo[g]:
                if math.isnan(best) or glo[g] < best:
                    best = glo[g]
    elif xn < x:
        for g in range(glo.shape[0]):
            if ghi[g] <= x and ghi[g] > xn and ghi[g] > glo[g]:
                if math.isnan(best) or ghi[g] > best:
                    best = ghi[g]
    return best


@njit(parallel=True, cache=True)
def entry_kernel(kind, par, tt, ta, tb, x0g, dxg, x0, ids, seed, rep, s, dt, n_steps, glo,
                 ghi, out_d, flags):
    """Entry time ``D_G = inf{t >= 0 : X(t) in G}`` for a union of open
    intervals; the linear interpolant of each step is tested against G.
    ``inf`` when G is not entered within ``n_steps``."""
    for i in prange(x0.shape[0]):
        x = x0[i]
        out_d[i] = np.inf
        if _inside(glo, ghi, x):
            out_d[i] = 0.0
            continue
        pid = ids[i]
        blk = -1
        z0 = z1 = z2 = z3 = 0.0
        for k in range(n_steps):
            t = s + k * dt
            a, b = coef_ab(kind, par, tt, ta, tb, x0g, dxg, t, x)
            if a < 0.0:
                flags[i] = NEG_DIFFUSION
                a = 0.0
            if k // 4 != blk:
                blk = k // 4
                z0, z1, z2, z3 = normal4(seed, rep, DIFFUSION, pid, blk)
            j = k % 4
            z = z0 if j == 0 else (z1 if j == 1 else (z2 if j == 2 else z3))
            xn = em_update(x, a, b, dt, z)
            e = _segment_entry(glo, ghi, x, xn)
            if not math.isnan(e):
                out_d[i] = k * dt + (e - x) / (xn - x) * dt
                break
            x = xn


@njit(parallel=True, cache=True)
def jump_kernel(kind, par, tt, ta, tb, x0g, dxg, x0, ids, seed, rep, s, dt, n_steps, rec,
                out_states, cpar, lam, qkind, qpar, ev_t, ev_pre, ev_post, ev_n,
                alpha, fpar, out_disc, flags):
    """Diffusion plus thinned jumps.

    Candidate ticks come from a rate-``lam`` Poisson clock; a tick at time
    ``t`` is accepted with probability ``c(x)/lam``. Ticks inside a step are
    applied after that step's diffusion move (operator splitting), with the
    exact tick time logged. Also accumulates the discounted occupation
    integral ``sum_k exp(-alpha k dt) f(X_k) dt`` (left point).
    """
    n_rec = rec.shape[0]
    cap = ev_t.shape[1]
    for i in prange(x0.shape[0]):
        x = x0[i]
        pid = ids[i]
        r = 0
        while r < n_rec and rec[r] == 0:
            out_states[i, r] = x
            r += 1
        tick_j = 0
        next_tick = np.inf
        if lam > 0.0:
            u0, u1, u2, u3 = uniform4(seed, rep, JUMP, pid, 0)
            next_tick = s - det_log(u0) / lam
        ne = 0
        disc = 0.0
        blk = -1
        z0 = z1 = z2 = z3 = 0.0
        for k in range(n_steps):
            t = s + k * dt
            disc += math.exp(-alpha * k * dt) * bump_f(fpar, x) * dt
            a, b = coef_ab(kind, par, tt, ta, tb, x0g, dxg, t, x)
            if a < 0.0:
                flags[i] |= NEG_DIFFUSION
                a = 0.0
            if k // 4 != blk:
                blk = k // 4
                z0, z1, z2, z3 = normal4(seed, rep, DIFFUSION, pid, blk)
            j = k % 4
            z = z0 if j == 0 else (z1 if j == 1 else (z2 if j == 2 else z3))
            x = em_update(x, a, b, dt, z)
            t1 = s + (k + 1) * dt
            while next_tick <= t1:
                u0, u1, u2, u3 = uniform4(seed, rep, JUMP, pid, tick_j)
                c = rate_c(cpar, x)
                if c > lam * (1.0 + 1e-12):
                    flags[i] |= DOMINATION
                if u1 * lam <= c:
                    y = x + displacement(qkind, qpar, u2, u3)
                    if ne < cap:
                        ev_t[i, ne] = next_tick
                        ev_pre[i, ne] = x
                        ev_post[i, ne] = y
                    else:
                        flags[i] |= EVENT_OVERFLOW
                    ne += 1
                    x = y
                tick_j += 1
                w0, w1, w2, w3 = uniform4(seed, rep, JUMP, pid, tick_j)
                next_tick = next_tick - det_log(w0) / lam
            while r < n_rec and rec[r] == k + 1:
                out_states[i, r] = x
                r += 1
        while r < n_rec:
            out_states[i, r] = x
            r += 1
        ev_n[i] = ne
        out_disc[i] = disc


@njit(parallel=True, cache=True)
def resolvent_chain_kernel(kind, par, tt, ta, tb, x0g, dxg, x0, ids, seed, rep, s, dt,
                           n_steps, cpar, lam, qkind, qpar, alpha, fpar, depth, out_val,
                           out_levels, flags):
    """Neumann-series estimate of ``U'f + U'K U'f + ...`` (``depth`` restarts).

    Level l: a jump-free diffusion from the current restart point carries
    the Feynman-Kac weight ``exp(-alpha t - int c)`` for ``U'f``; thinning on
    the same path locates the first jump, whose post-jump point (discounted
    by the elapsed time, which is measured from the original start) seeds
    level l+1. Levels use disjoint substreams 10+2l (diffusion) and 11+2l
    (jumps).
    """
    for i in prange(x0.shape[0]):
        pid = ids[i]
        y = x0[i]
        k_start = 0
        total = 0.0
        levels = 0
        for lev in range(depth + 1):
            levels = lev + 1
            sub_d = np.uint64(10 + 2 * lev)
            sub_j = np.uint64(11 + 2 * lev)
            x = y
            kill = 0.0
            acc = 0.0
            tick_j = 0
            u0, u1, u2, u3 = uniform4(seed, rep, sub_j, pid, 0)
            next_tick = -det_log(u0) / lam if lam > 0.0 else np.inf
            found = False
            k_next = 0
            y_next = 0.0
            blk = -1
            z0 = z1 = z2 = z3 = 0.0
            for k in range(k_start, n_steps):
                kk = k - k_start
                t = s + k * dt
                c_here = rate_c(cpar, x)
                acc += math.exp(-alpha * k * dt - kill) * bump_f(fpar, x) * dt
                kill += c_here * dt
                a, b = coef_ab(kind, par, tt, ta, tb, x0g, dxg, t, x)
                if a < 0.0:
                    flags[i] |= NEG_DIFFUSION
                    a = 0.0
                if kk // 4 != blk:
                    blk = kk // 4
                    z0, z1, z2, z3 = normal4(seed, rep, sub_d, pid, blk)
                j = kk % 4
                z = z0 if j == 0 else (z1 if j == 1 else (z2 if j == 2 else z3))
                x = em_update(x, a, b, dt, z)
                elapsed = (kk + 1) * dt
                while (not found) and next_tick <= elapsed:
                    u0, u1, u2, u3 = uniform4(seed, rep, sub_j, pid, tick_j)
                    c = rate_c(cpar, x)
                    if c > lam * (1.0 + 1e-12):
                        flags[i] |= DOMINATION
                    if u1 * lam <= c:
                        found = True
                        k_next = k + 1
                        y_next = x + displacement(qkind, qpar, u2, u3)
                    tick_j += 1
                    w0, w1, w2, w3 = uniform4(seed, rep, sub_j, pid, tick_j)
                    next_tick = next_tick - det_log(w0) / lam
            total += acc
            if not found or k_next >= n_steps:
                break
            k_start = k_next
            y = y_next
        out_val[i] = total
        out_levels[i] = levels
