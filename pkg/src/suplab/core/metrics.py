"""Distances between density slices on a common grid."""

from __future__ import annotations

import numpy as np

from ..errors import NotNormalized
from .grid import Density, _check_same_grid

NORMALIZATION_TOL = 1e-6


def l1_distance(u: Density, v: Density) -> float:
    """``sum_i |u_i - v_i| dx``."""
    _check_same_grid(u.grid, v.grid)
    return float(np.sum(np.abs(u.values - v.values)) * u.grid.dx)


def wasserstein1(u: Density, v: Density) -> float:
    """W1 on the line as ``int |CDF_u - CDF_v| dx`` with cumulative sums.

    Both slices must carry unit mass; the truncated window is the metric
    space, which is the proxy used for weak-continuity checks.
    """
    _check_same_grid(u.grid, v.grid)
    for name, d in (("u", u), ("v", v)):
        if abs(d.mass - 1.0) > NORMALIZATION_TOL:
            raise NotNormalized(f"{name} has mass {d.mass!r}")
    return float(np.sum(np.abs(u.cdf() - v.cdf())) * u.grid.dx)


def ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic of raw samples."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))
