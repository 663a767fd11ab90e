"""Initial laws: Gaussian, uniform, or a density given on a grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Density, SpatialGrid, gaussian_density, uniform_density


@dataclass(frozen=True)
class GaussianLaw:
    mean: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError("Gaussian law needs var > 0")

    def density(self, grid: SpatialGrid) -> Density:
        return gaussian_density(grid, self.mean, self.var)


@dataclass(frozen=True)
class UniformLaw:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("uniform law needs a < b")

    def density(self, grid: SpatialGrid) -> Density:
        return uniform_density(grid, self.a, self.b)


@dataclass(frozen=True)
class GridLaw:
    """Law with a piecewise-constant density on a grid."""

    slice: Density

    def density(self, grid: SpatialGrid) -> Density:
        if grid != self.slice.grid:
            raise ValueError("GridLaw density requested on a different grid")
        return self.slice.normalized()

    def sample_from_uniforms(self, u_cell, u_pos) -> np.ndarray:
        g = self.slice.grid
        cdf = np.cumsum(np.clip(self.slice.values, 0.0, None))
        idx = np.searchsorted(cdf, u_cell * cdf[-1], side="left")
        idx = np.clip(idx, 0, g.n_cells - 1)
        return g.x_min + (idx + u_pos) * g.dx
