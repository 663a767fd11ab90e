"""Counter-based random streams.

Every random number used by the simulators is a pure function of
``(seed, replicate, substream, particle id, block counter)``, produced by the
Philox4x64-10 bijection (the same generator numpy ships as
``numpy.random.Philox``). A block of four 64-bit words yields four uniforms
or, through Box-Muller, four standard normals. Because nothing is sequential,
the values drawn for a particle do not depend on how particles are scheduled
across threads.

Key layout: ``key = (seed, replicate)``,
``counter = (block, particle id, substream, 0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _threads  # noqa: F401  (thread cap before numba import)
from llvmlite import ir
from numba import njit, prange, types
from numba.extending import intrinsic

# substream tags; disjoint so that e.g. switching jumps off leaves the
# diffusion noise of every path unchanged
DIFFUSION = 0
JUMP = 1
INIT = 2
RESAMPLE = 3
AUX = 4

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO_M53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi


@intrinsic
def _mulhilo(typingctx, a, b):
    """Full 64x64 -> 128-bit product as ``(hi, lo)`` (one machine multiply)."""
    sig = types.UniTuple(types.uint64, 2)(types.uint64, types.uint64)

    def codegen(context, builder, signature, args):
        i128 = ir.IntType(128)
        i64 = ir.IntType(64)
        p = builder.mul(builder.zext(args[0], i128), builder.zext(args[1], i128))
        hi = builder.trunc(builder.lshr(p, ir.Constant(i128, 64)), i64)
        lo = builder.trunc(p, i64)
        return context.make_tuple(builder, signature.return_type, (hi, lo))

    return sig, codegen


@njit(cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x64 on counter ``(c0..c3)`` with key ``(k0, k1)``."""
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0, lo0 = _mulhilo(_M0, np.uint64(c0))
        hi1, lo1 = _mulhilo(_M1, np.uint64(c2))
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit(inline="always", cache=True)
def _to_unit(w):
    # (0, 1], safe for log
    return (np.float64(w >> _S11) + 1.0) * _TWO_M53


@njit(cache=True)
def uniform4(seed, rep, sub, pid, block):
    """Four uniforms in (0, 1] for one counter block."""
    w0, w1, w2, w3 = philox4x64(
        np.uint64(block), np.uint64(pid), np.uint64(sub), np.uint64(0),
        np.uint64(seed), np.uint64(rep),
    )
    return _to_unit(w0), _to_unit(w1), _to_unit(w2), _to_unit(w3)


# Box-Muller needs log, cos and sin. libm results can differ in the last bit
# between a vectorized loop body and its scalar remainder, which would make a
# particle's noise depend on where it sits in an array. The versions below use
# only correctly rounded IEEE operations (no FMA contraction without
# fastmath), so every call site produces the same bits.
_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10
_SQRT_HALF = 0.7071067811865476
_FLOG = (2.0, 2.0 / 3, 2.0 / 5, 2.0 / 7, 2.0 / 9, 2.0 / 11, 2.0 / 13, 2.0 / 15,
         2.0 / 17, 2.0 / 19, 2.0 / 21, 2.0 / 23)
# Taylor coefficients of cos and sin/x in th^2, highest order first
_FCOS = tuple((-1.0) ** k / math.factorial(2 * k) for k in range(9, -1, -1))
_FSIN = tuple((-1.0) ** k / math.factorial(2 * k + 1) for k in range(9, -1, -1))


@njit(inline="always", cache=True)
def det_log(u):
    """log(u) for finite u > 0 from basic arithmetic (error ~1 ulp)."""
    m, e = math.frexp(u)
    if m < _SQRT_HALF:
        m = 2.0 * m
        e -= 1
    f = (m - 1.0) / (m + 1.0)
    f2 = f * f
    p = ((((((((((_FLOG[11] * f2 + _FLOG[10]) * f2 + _FLOG[9]) * f2 + _FLOG[8]) * f2
                + _FLOG[7]) * f2 + _FLOG[6]) * f2 + _FLOG[5]) * f2 + _FLOG[4]) * f2
            + _FLOG[3]) * f2 + _FLOG[2]) * f2 + _FLOG[1]) * f2 + _FLOG[0]
    return e * _LN2_HI + (f * p + e * _LN2_LO)


@njit(inline="always", cache=True)
def det_cos_sin_turn(u):
    """``(cos 2 pi u, sin 2 pi u)`` from basic arithmetic."""
    n = math.floor(4.0 * u + 0.5)
    y = u - 0.25 * n  # exact, |y| <= 1/8
    th = _TWO_PI * y
    t2 = th * th
    c = _FCOS[0]
    sn = _FSIN[0]
    for k in range(1, 10):
        c = c * t2 + _FCOS[k]
        sn = sn * t2 + _FSIN[k]
    sn = sn * th
    q = int(n) & 3
    if q == 0:
        return c, sn
    if q == 1:
        return -sn, c
    if q == 2:
        return -c, -sn
    return sn, -c


@njit(cache=True)
def normal4(seed, rep, sub, pid, block):
    """Four standard normals (two Box-Muller pairs) for one counter block."""
    u0, u1, u2, u3 = uniform4(seed, rep, sub, pid, block)
    r0 = math.sqrt(-2.0 * det_log(u0))
    r1 = math.sqrt(-2.0 * det_log(u2))
    c0, s0 = det_cos_sin_turn(u1)
    c1, s1 = det_cos_sin_turn(u3)
    return r0 * c0, r0 * s0, r1 * c1, r1 * s1


@njit(cache=True)
def normal_at(seed, rep, sub, pid, index):
    """The ``index``-th normal of a particle's substream (4 per block)."""
    z0, z1, z2, z3 = normal4(seed, rep, sub, pid, index // 4)
    j = index % 4
    if j == 0:
        return z0
    if j == 1:
        return z1
    if j == 2:
        return z2
    return z3


@njit(parallel=True, cache=True)
def _normals_kernel(seed, rep, sub, ids, index, out):
    for i in prange(ids.shape[0]):
        out[i] = normal_at(seed, rep, sub, ids[i], index)


@njit(parallel=True, cache=True)
def _uniform_kernel(seed, rep, sub, ids, block, out):
    for i in prange(ids.shape[0]):
        u0, u1, u2, u3 = uniform4(seed, rep, sub, ids[i], block)
        out[i, 0] = u0
        out[i, 1] = u1
        out[i, 2] = u2
        out[i, 3] = u3


@njit(parallel=True, cache=True)
def _normal_block_kernel(seed, rep, sub, ids, block, out):
    for i in prange(ids.shape[0]):
        z0, z1, z2, z3 = normal4(seed, rep, sub, ids[i], block)
        out[i, 0] = z0
        out[i, 1] = z1
        out[i, 2] = z2
        out[i, 3] = z3


def philox_raw(counter, key):
    """Raw Philox4x64-10 output words for a single counter block."""
    c = [np.uint64(v) for v in counter]
    k = [np.uint64(v) for v in key]
    return tuple(int(w) for w in philox4x64(c[0], c[1], c[2], c[3], k[0], k[1]))


@dataclass(frozen=True)
class RngStream:
    """A family of counter-based streams for one (seed, replicate) pair.

    Individual streams are addressed by particle id and substream tag; the
    position inside a stream is an explicit counter, never hidden state.
    """

    seed: int
    replicate: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if not 0 <= int(self.replicate) < 2**64:
            raise ValueError("replicate must fit in 64 unsigned bits")

    def child(self, replicate):
        return RngStream(self.seed, replicate)

    def normals(self, ids, index, substream=DIFFUSION):
        ids = np.ascontiguousarray(ids, dtype=np.int64)
        out = np.empty(ids.shape[0])
        _normals_kernel(np.uint64(self.seed), np.uint64(self.replicate),
                        np.uint64(substream), ids, np.int64(index), out)
        return out

    def uniforms(self, ids, block=0, substream=INIT):
        """``(len(ids), 4)`` uniforms in (0, 1] from one counter block."""
        ids = np.ascontiguousarray(ids, dtype=np.int64)
        out = np.empty((ids.shape[0], 4))
        _uniform_kernel(np.uint64(self.seed), np.uint64(self.replicate),
                        np.uint64(substream), ids, np.int64(block), out)
        return out

    def normal_block(self, ids, block=0, substream=INIT):
        """``(len(ids), 4)`` standard normals from one counter block."""
        ids = np.ascontiguousarray(ids, dtype=np.int64)
        out = np.empty((ids.shape[0], 4))
        _normal_block_kernel(np.uint64(self.seed), np.uint64(self.replicate),
                             np.uint64(substream), ids, np.int64(block), out)
        return out

    def generator(self, tag=AUX):
        """A sequential numpy Generator for reductions that are not
        per-particle (bootstrap resampling); deterministic in (seed, key)."""
        key1 = (int(self.replicate) * 1000003 + int(tag)) % 2**64
        return np.random.Generator(np.random.Philox(key=[int(self.seed), key1]))
