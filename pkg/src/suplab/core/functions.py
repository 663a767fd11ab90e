"""Catalogs of test functions referenced by id in scenarios.

* terminal/boundary data ``F(t, x)`` for the Dirichlet problem,
* bounded integrands ``f`` for the resolvent check (``f0 + f1 exp(-f2 x^2)``),
* Lyapunov functions ``V = v0 + v1 log(1+x^2) + v2 x^2`` with derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UnknownCatalogId


@dataclass(frozen=True)
class BoundaryData:
    """``F(t, x)`` on the parabolic boundary of ``(0, T) x (xl, xr)``."""

    name: str

    def __call__(self, t, x, xl=-np.inf, xr=np.inf):
        x = np.asarray(x, dtype=float)
        if self.name == "x":
            return x.copy()
        if self.name == "x2":
            return x * x
        if self.name == "one":
            return np.ones_like(x)
        if self.name == "right_indicator":
            # 1 on the right side boundary, 0 elsewhere (incl. terminal time)
            return (x >= xr).astype(float)
        if self.name == "left_indicator":
            return (x <= xl).astype(float)
        raise UnknownCatalogId(f"unknown boundary function {self.name!r}")

    @property
    def bound(self) -> float:
        """Sup norm on bounded sets, ``inf`` for unbounded data."""
        return 1.0 if self.name in ("one", "right_indicator", "left_indicator") else np.inf


BOUNDARY_IDS = ("x", "x2", "one", "right_indicator", "left_indicator")


def boundary_data(fid: str) -> BoundaryData:
    if fid not in BOUNDARY_IDS:
        raise UnknownCatalogId(f"unknown boundary function {fid!r}; known: {list(BOUNDARY_IDS)}")
    return BoundaryData(fid)


INTEGRANDS = {
    "one": (1.0, 0.0, 0.0),
    "gauss_bump": (0.0, 1.0, 1.0),  # exp(-x^2)
}


def integrand(fid: str) -> np.ndarray:
    try:
        return np.array(INTEGRANDS[fid], dtype=float)
    except KeyError:
        raise UnknownCatalogId(f"unknown integrand {fid!r}; known: {sorted(INTEGRANDS)}") from None


def integrand_sup(fpar) -> float:
    f0, f1, _ = fpar
    return max(abs(f0), abs(f0 + f1))


@dataclass(frozen=True)
class Lyapunov:
    """``V(x) = v0 + v1 log(1 + x^2) + v2 x^2``."""

    v0: float
    v1: float
    v2: float
    name: str = "custom"

    @property
    def par(self) -> np.ndarray:
        return np.array([self.v0, self.v1, self.v2])

    def V(self, x):
        x = np.asarray(x, dtype=float)
        return self.v0 + self.v1 * np.log1p(x * x) + self.v2 * x * x

    def dV(self, x):
        x = np.asarray(x, dtype=float)
        return self.v1 * 2 * x / (1 + x * x) + 2 * self.v2 * x

    def d2V(self, x):
        x = np.asarray(x, dtype=float)
        return self.v1 * 2 * (1 - x * x) / (1 + x * x) ** 2 + 2 * self.v2 + 0 * x


LYAPUNOV_CATALOG = {
    "log1p_sq": Lyapunov(1.0, 1.0, 0.0, "log1p_sq"),
    "one": Lyapunov(1.0, 0.0, 0.0, "one"),
    "x2": Lyapunov(0.0, 0.0, 1.0, "x2"),
}


def lyapunov_function(vid: str) -> Lyapunov:
    try:
        return LYAPUNOV_CATALOG[vid]
    except KeyError:
        raise UnknownCatalogId(
            f"unknown Lyapunov function {vid!r}; known: {sorted(LYAPUNOV_CATALOG)}"
        ) from None
