"""Bounded jump kernels ``K(x, dy) = c(x) q(dy - x)``.

The rate is ``c(x) = c0 + c1 exp(-x^2)`` and the displacement law ``q`` is
one of a small catalog whose moments are available in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from ..errors import KernelUnbounded, UnknownCatalogId
from .grid import SpatialGrid

# displacement kinds, shared with the compiled kernels
Q_KINDS = {"gaussian": 0, "two_point": 1, "uniform": 2, "shift": 3}


@dataclass(frozen=True)
class JumpKernel:
    """Rate ``c0 + c1 exp(-x^2)`` and displacement law ``q``.

    ``qpar`` meaning by kind:

    * ``gaussian``: (mean, sd)
    * ``two_point``: (d1, d2, p) with mass p at d1 and 1 - p at d2
    * ``uniform``: (lo, hi)
    * ``shift``: (m,) point mass at m

    ``lam`` is the dominating thinning rate; by default ``sup c``.
    """

    c0: float = 0.0
    c1: float = 0.0
    q: str = "gaussian"
    qpar: tuple = (0.0, 0.1)
    lam: float | None = None

    def __post_init__(self):
        if self.q not in Q_KINDS:
            raise UnknownCatalogId(f"unknown displacement law {self.q!r}; known: {sorted(Q_KINDS)}")
        if not (math.isfinite(self.c0) and math.isfinite(self.c1)):
            raise KernelUnbounded("jump rate parameters must be finite")
        if self.c0 < 0 or self.c0 + min(self.c1, 0.0) < 0:
            raise ValueError("jump rate must be nonnegative")
        qp = tuple(float(v) for v in self.qpar)
        need = {"gaussian": 2, "two_point": 3, "uniform": 2, "shift": 1}[self.q]
        if len(qp) != need:
            raise ValueError(f"{self.q} displacement takes {need} parameters, got {len(qp)}")
        if self.q == "gaussian" and not qp[1] > 0:
            raise ValueError("gaussian displacement needs sd > 0")
        if self.q == "uniform" and not qp[0] < qp[1]:
            raise ValueError("uniform displacement needs lo < hi")
        if self.q == "two_point" and not 0.0 <= qp[2] <= 1.0:
            raise ValueError("two-point weight must lie in [0, 1]")
        object.__setattr__(self, "qpar", qp)
        if self.lam is None:
            object.__setattr__(self, "lam", self.sup_rate)

    @property
    def sup_rate(self) -> float:
        return self.c0 + max(self.c1, 0.0)

    @property
    def is_zero(self) -> bool:
        return self.sup_rate == 0.0

    def rate(self, x):
        x = np.asarray(x, dtype=float)
        return self.c0 + self.c1 * np.exp(-x * x)

    def kernel_args(self):
        """``(cpar, lam, qkind, qpar)`` in the layout the compiled kernels use."""
        qpar = np.zeros(3)
        qpar[: len(self.qpar)] = self.qpar
        return np.array([self.c0, self.c1]), float(self.lam), Q_KINDS[self.q], qpar

    # -- displacement law ------------------------------------------------------

    def q_cdf(self, y):
        """``P(Y <= y)`` (right-continuous)."""
        y = np.asarray(y, dtype=float)
        p = self.qpar
        if self.q == "gaussian":
            return ndtr((y - p[0]) / p[1])
        if self.q == "two_point":
            return p[2] * (y >= p[0]) + (1 - p[2]) * (y >= p[1])
        if self.q == "uniform":
            return np.clip((y - p[0]) / (p[1] - p[0]), 0.0, 1.0)
        return (y >= p[0]).astype(float)

    def q_moments(self):
        """``(P(Y != 0), E Y, E Y^2, E|Y|)``."""
        p = self.qpar
        if self.q == "gaussian":
            m, s = p
            e_abs = s * math.sqrt(2 / math.pi) * math.exp(-m * m / (2 * s * s)) \
                + m * (1 - 2 * float(ndtr(-m / s)))
            return 1.0, m, m * m + s * s, e_abs
        if self.q == "two_point":
            d1, d2, w = p
            nz = w * (d1 != 0) + (1 - w) * (d2 != 0)
            return (nz, w * d1 + (1 - w) * d2, w * d1 * d1 + (1 - w) * d2 * d2,
                    w * abs(d1) + (1 - w) * abs(d2))
        if self.q == "uniform":
            lo, hi = p
            m2 = (hi**3 - lo**3) / (3 * (hi - lo))
            if lo >= 0 or hi <= 0:
                e_abs = abs(lo + hi) / 2
            else:
                e_abs = (lo * lo + hi * hi) / (2 * (hi - lo))
            return 1.0, (lo + hi) / 2, m2, e_abs
        m = p[0]
        return float(m != 0), m, m * m, abs(m)

    def variance(self) -> float:
        _, m1, m2, _ = self.q_moments()
        return m2 - m1 * m1

    # -- discretization --------------------------------------------------------

    def check_bounded(self, grid: SpatialGrid) -> float:
        c = self.rate(grid.centers)
        if not np.all(np.isfinite(c)):
            raise KernelUnbounded("jump rate is not finite on the grid")
        return float(c.max())

    def transfer_matrix(self, grid: SpatialGrid) -> np.ndarray:
        """``P[i, j]`` = probability that a jump from centre ``x_i`` lands in
        cell ``j``; mass leaving the window is assigned to the edge cells."""
        f = grid.faces
        x = grid.centers
        # P(x_i + Y < f_j) for interior faces; jumps landing exactly on a face
        # go to the right-hand cell
        F = self._strict_cdf(f[None, 1:-1] - x[:, None])
        n = grid.n_cells
        P = np.empty((n, n))
        P[:, 0] = F[:, 0]
        P[:, 1:-1] = np.diff(F, axis=1)
        P[:, -1] = 1.0 - F[:, -1]
        return np.clip(P, 0.0, None)

    def _strict_cdf(self, y):
        if self.q in ("two_point", "shift"):
            p = self.qpar
            if self.q == "shift":
                return (y > p[0]).astype(float)
            return p[2] * (y > p[0]) + (1 - p[2]) * (y > p[1])
        return self.q_cdf(y)


NO_JUMPS = JumpKernel(0.0, 0.0, "shift", (0.0,))


def jump_kernel(kernel_id: str, **params) -> JumpKernel:
    """Catalog constructor used by scenarios.

    ``none``: no jumps; ``const``: constant rate ``c`` with any displacement
    law; ``bump``: rate ``c0 + c1 exp(-x^2)``.
    """
    q = params.get("q", "gaussian")
    qpar = params.get("qpar", (0.0, 0.1))
    if kernel_id == "none":
        return NO_JUMPS
    if kernel_id == "const":
        return JumpKernel(params.get("c", 1.0), 0.0, q, qpar, params.get("lam"))
    if kernel_id == "bump":
        return JumpKernel(params.get("c0", 0.5), params.get("c1", 1.0), q, qpar,
                          params.get("lam"))
    raise UnknownCatalogId(f"unknown jump kernel {kernel_id!r}; known: ['bump', 'const', 'none']")
