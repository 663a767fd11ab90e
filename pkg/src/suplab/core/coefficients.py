"""Coefficient models ``a(t, x)``, ``b(t, x)`` of the operator
``L_t f = b f' + 1/2 a f''`` and the Nemytskii porous-media triple.

Every linear model reduces to a *pack* that the compiled path kernels can
evaluate: either the parametric family

    a(t, x) = a0 + a2 x^2
    b(t, x) = b0 - theta (x - mean) + amp sin(omega t)

or a table of values on a space-time grid (linear in t, piecewise constant
in x), which is how frozen (linearized) coefficients are represented. The
numpy-facing ``a``/``b`` methods call the same compiled evaluator, so the
PDE and particle codes see bit-identical coefficient values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .. import _threads  # noqa: F401
from numba import njit, prange

from ..errors import UnknownCatalogId
from .grid import DensityTrajectory, SpatialGrid

PARAMETRIC = 0
TABLE = 1

U_FLOOR = 1e-12


class CoefPack(NamedTuple):
    kind: int
    par: np.ndarray  # float64[7]
    tt: np.ndarray  # table times
    ta: np.ndarray  # table a, shape (K, n)
    tb: np.ndarray  # table b, shape (K, n)
    x0: float
    dx: float


_EMPTY_T = np.zeros(1)
_EMPTY_TAB = np.zeros((1, 1))


@njit(inline="always", cache=True)
def coef_ab(kind, par, tt, ta, tb, x0, dx, t, x):
    """``(a, b)`` at one space-time point."""
    if kind == 0:
        a = par[0] + par[1] * x * x
        b = par[2] - par[3] * (x - par[4])
        if par[5] != 0.0:
            b += par[5] * math.sin(par[6] * t)
        return a, b
    n = ta.shape[1]
    i = int(math.floor((x - x0) / dx))
    if i < 0:
        i = 0
    elif i > n - 1:
        i = n - 1
    K = tt.shape[0]
    if K == 1 or t <= tt[0]:
        return ta[0, i], tb[0, i]
    if t >= tt[K - 1]:
        return ta[K - 1, i], tb[K - 1, i]
    k = np.searchsorted(tt, t, side="right") - 1
    w = (t - tt[k]) / (tt[k + 1] - tt[k])
    return (1.0 - w) * ta[k, i] + w * ta[k + 1, i], (1.0 - w) * tb[k, i] + w * tb[k + 1, i]


@njit(parallel=True, cache=True)
def _eval_kernel(kind, par, tt, ta, tb, x0, dx, t, xs, out_a, out_b):
    for j in prange(xs.shape[0]):
        a, b = coef_ab(kind, par, tt, ta, tb, x0, dx, t, xs[j])
        out_a[j] = a
        out_b[j] = b


class CoefficientModel:
    """Base class; subclasses provide ``pack()``."""

    name = "model"
    elliptic = True
    time_dependent = False
    density_dependent = False

    def pack(self) -> CoefPack:
        raise NotImplementedError

    def ab(self, t, x):
        x = np.asarray(x, dtype=float)
        flat = np.ascontiguousarray(x.ravel())
        a = np.empty(flat.size)
        b = np.empty(flat.size)
        p = self.pack()
        _eval_kernel(p.kind, p.par, p.tt, p.ta, p.tb, p.x0, p.dx, float(t), flat, a, b)
        return a.reshape(x.shape), b.reshape(x.shape)

    def a(self, t, x):
        return self.ab(t, x)[0]

    def b(self, t, x):
        return self.ab(t, x)[1]


@dataclass(frozen=True)
class Parametric(CoefficientModel):
    a0: float = 1.0
    a2: float = 0.0
    b0: float = 0.0
    theta: float = 0.0
    mean: float = 0.0
    amp: float = 0.0
    omega: float = 1.0
    name: str = "parametric"

    @property
    def elliptic(self):
        return self.a0 > 0 and self.a2 >= 0

    @property
    def time_dependent(self):
        return self.amp != 0.0

    def pack(self) -> CoefPack:
        par = np.array([self.a0, self.a2, self.b0, self.theta, self.mean, self.amp, self.omega],
                       dtype=float)
        return CoefPack(PARAMETRIC, par, _EMPTY_T, _EMPTY_TAB, _EMPTY_TAB, 0.0, 1.0)


def Constant(a0=1.0, b0=0.0) -> Parametric:
    return Parametric(a0=a0, b0=b0, name="constant")


def OrnsteinUhlenbeck(a0=1.0, theta=1.0, mean=0.0) -> Parametric:
    """``dX = -theta (X - mean) dt + sqrt(a0) dW``."""
    return Parametric(a0=a0, theta=theta, mean=mean, name="ou")


_TIME_DEPENDENT = {
    # b(t, x) = sin t
    "sin_drift": dict(a0=1.0, amp=1.0),
    # b(t, x) = -x + sin t
    "ou_sin": dict(a0=1.0, theta=1.0, amp=1.0),
}


def TimeDependent(catalog_id: str) -> Parametric:
    try:
        kw = _TIME_DEPENDENT[catalog_id]
    except KeyError:
        raise UnknownCatalogId(f"unknown time-dependent model {catalog_id!r}") from None
    return Parametric(name=catalog_id, **kw)


@dataclass(frozen=True, eq=False)
class Tabulated(CoefficientModel):
    """Coefficients tabulated at cell centres of ``grid`` for ``times``."""

    grid: SpatialGrid
    times: np.ndarray
    a_table: np.ndarray
    b_table: np.ndarray
    name: str = "tabulated"
    _pack: CoefPack = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tt = np.ascontiguousarray(np.atleast_1d(np.asarray(self.times, dtype=float)))
        ta = np.ascontiguousarray(np.atleast_2d(np.asarray(self.a_table, dtype=float)))
        tb = np.ascontiguousarray(np.atleast_2d(np.asarray(self.b_table, dtype=float)))
        if ta.shape != (tt.size, self.grid.n_cells) or tb.shape != ta.shape:
            raise ValueError("table shape does not match times x cells")
        object.__setattr__(self, "_pack", CoefPack(TABLE, np.zeros(7), tt, ta, tb,
                                                   self.grid.x_min, self.grid.dx))

    @property
    def time_dependent(self):
        return self._pack.tt.size > 1

    @property
    def elliptic(self):
        return bool(np.all(self._pack.ta > 0))

    def pack(self) -> CoefPack:
        return self._pack


# --------------------------------------------------------------------------
# porous media (Nemytskii) triple


def _beta_linear(r):
    return r


def _beta_r_linear(r):
    return np.ones_like(r)


def _beta_cubic(r):
    return r + r**3 / 3.0


def _beta_r_cubic(r):
    return 1.0 + r**2


def _beta_square(r):
    return r * np.abs(r)


def _beta_r_square(r):
    return 2.0 * np.abs(r)


BETA_CATALOG = {
    "linear": (_beta_linear, _beta_r_linear),
    "cubic": (_beta_cubic, _beta_r_cubic),
    # classical porous medium beta(r) = r|r|; degenerate at r = 0
    "square": (_beta_square, _beta_r_square),
}

D_CATALOG = {
    "zero": lambda x: np.zeros_like(x),
    "one": lambda x: np.ones_like(x),
}

B_CATALOG = {
    "one": lambda r: np.ones_like(r),
    "inv1p": lambda r: 1.0 / (1.0 + r),
}


def _lookup(catalog, key, what):
    try:
        return catalog[key]
    except KeyError:
        raise UnknownCatalogId(
            f"unknown {what} id {key!r}; known: {sorted(catalog)}"
        ) from None


@dataclass(frozen=True)
class PorousMedia:
    """``du/dt = (beta(u))'' - (D(x) b(u) u)'`` with catalog ids."""

    beta_id: str = "cubic"
    D_id: str = "zero"
    b_id: str = "one"
    name = "porous"
    density_dependent = True

    def __post_init__(self):
        _lookup(BETA_CATALOG, self.beta_id, "beta")
        _lookup(D_CATALOG, self.D_id, "D")
        _lookup(B_CATALOG, self.b_id, "b")

    def beta(self, r):
        return _lookup(BETA_CATALOG, self.beta_id, "beta")[0](np.asarray(r, dtype=float))

    def beta_r(self, r):
        return _lookup(BETA_CATALOG, self.beta_id, "beta")[1](np.asarray(r, dtype=float))

    def D(self, x):
        return _lookup(D_CATALOG, self.D_id, "D")(np.asarray(x, dtype=float))

    def b_of(self, r):
        return _lookup(B_CATALOG, self.b_id, "b")(np.asarray(r, dtype=float))

    def a_of_density(self, u):
        """``2 beta(u)/u``; below ``U_FLOOR`` the Taylor limit ``2 beta_r(0)``."""
        u = np.asarray(u, dtype=float)
        small = u < U_FLOOR
        safe = np.where(small, 1.0, u)
        return np.where(small, 2.0 * self.beta_r(np.zeros_like(u)), 2.0 * self.beta(safe) / safe)

    def drift_of_density(self, x, u):
        return self.D(x) * self.b_of(u)


def linearize(traj: DensityTrajectory, porous: PorousMedia) -> Tabulated:
    """Freeze ``u`` in the porous coefficients: ``a^u = 2 beta(u)/u``,
    ``b^u = D(x) b(u)``; linear in t, piecewise constant in x."""
    x = traj.grid.centers
    A = porous.a_of_density(traj.values)
    B = porous.drift_of_density(x[None, :], traj.values)
    return Linearized(traj.grid, traj.times, A, B, name="linearized", trajectory=traj,
                      porous=porous)


@dataclass(frozen=True, eq=False)
class Linearized(Tabulated):
    trajectory: DensityTrajectory | None = None
    porous: PorousMedia | None = None


def density_coefficients(porous: PorousMedia, u, grid: SpatialGrid, t=0.0) -> Tabulated:
    """Coefficients of the porous model frozen at a single density slice."""
    A = porous.a_of_density(u)
    B = porous.drift_of_density(grid.centers, u)
    return Tabulated(grid, np.array([t]), A[None, :], B[None, :], name="frozen")


def coefficient_model(model_id: str, **params) -> CoefficientModel | PorousMedia:
    """Catalog constructor used by scenarios."""
    if model_id == "constant":
        return Constant(params.get("a0", 1.0), params.get("b0", 0.0))
    if model_id == "ou":
        return OrnsteinUhlenbeck(params.get("a0", 1.0), params.get("theta", 1.0),
                                 params.get("mean", 0.0))
    if model_id in _TIME_DEPENDENT:
        return TimeDependent(model_id)
    if model_id == "x2_diffusion":
        return Parametric(a0=0.0, a2=1.0, name="x2_diffusion")
    if model_id == "porous":
        return PorousMedia(params.get("beta", "cubic"), params.get("D", "zero"),
                           params.get("b", "one"))
    raise UnknownCatalogId(f"unknown coefficient model {model_id!r}")
