"""Spatial grids, density slices and density trajectories (d = 1)."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import ndtr

from ..errors import CheckpointOutsideTrajectory, GridMismatch, InvalidGrid, WindowTooSmall

MIN_CELLS = 8


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform cell-centred grid on the truncated window ``[x_min, x_max]``."""

    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise InvalidGrid("window bounds must be finite")
        if not self.x_min < self.x_max:
            raise InvalidGrid(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if int(self.n_cells) != self.n_cells or self.n_cells < MIN_CELLS:
            raise InvalidGrid(f"need an integer n_cells >= {MIN_CELLS}, got {self.n_cells}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @cached_property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @cached_property
    def faces(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_cells + 1) * self.dx

    def cell_index(self, x):
        """Index of the cell containing ``x``, clamped to the window."""
        i = np.floor((np.asarray(x, dtype=float) - self.x_min) / self.dx).astype(np.int64)
        return np.clip(i, 0, self.n_cells - 1)

    def refine(self, factor=2) -> SpatialGrid:
        return SpatialGrid(self.x_min, self.x_max, self.n_cells * factor)


def steps_for(T: float, dt: float) -> int:
    """Number of steps of size ``dt`` in ``[0, T]``; T must be on the lattice."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = int(round(T / dt))
    if n < 0 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a whole number of steps dt={dt}")
    return n


def make_grid(x_min: float, x_max: float, n_cells: int) -> SpatialGrid:
    return SpatialGrid(float(x_min), float(x_max), n_cells)


def _check_same_grid(g1: SpatialGrid, g2: SpatialGrid):
    if g1 != g2:
        raise GridMismatch(f"grids differ: {g1} vs {g2}")


@dataclass(frozen=True)
class Density:
    """One time slice ``u(t, x_i)`` of a density on a grid."""

    grid: SpatialGrid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_cells,):
            raise GridMismatch(f"expected {self.grid.n_cells} values, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.dx)

    def normalized(self) -> Density:
        return Density(self.grid, self.values / self.mass, self.t)

    def mean(self) -> float:
        return float(np.sum(self.grid.centers * self.values) * self.grid.dx / self.mass)

    def variance(self) -> float:
        m = self.mean()
        return float(np.sum((self.grid.centers - m) ** 2 * self.values) * self.grid.dx / self.mass)

    def expect(self, f) -> float:
        """``sum_i f(x_i) u_i dx``."""
        return float(np.sum(np.asarray(f(self.grid.centers)) * self.values) * self.grid.dx)

    def cdf(self) -> np.ndarray:
        """Cumulative mass at the right face of every cell."""
        return np.cumsum(self.values) * self.grid.dx

    def at_time(self, t) -> Density:
        return Density(self.grid, self.values, t)


def gaussian_density(grid: SpatialGrid, mean: float, var: float, tail_tol=1e-6) -> Density:
    """Point-sampled normal density, renormalised to unit mass on the grid.

    Raises WindowTooSmall when the analytic mass outside the window exceeds
    ``tail_tol``.
    """
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var}")
    sd = np.sqrt(var)
    tail = ndtr((grid.x_min - mean) / sd) + ndtr(-(grid.x_max - mean) / sd)
    if tail > tail_tol:
        raise WindowTooSmall(
            f"N({mean}, {var}) puts mass {tail:.3g} outside [{grid.x_min}, {grid.x_max}]"
        )
    x = grid.centers
    u = np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2 * np.pi * var)
    return Density(grid, u / (u.sum() * grid.dx))


def uniform_density(grid: SpatialGrid, a: float, b: float) -> Density:
    """Uniform law on (a, b), cell-averaged so partial cells get partial mass."""
    if not a < b:
        raise ValueError("uniform law needs a < b")
    f = grid.faces
    overlap = np.clip(np.minimum(f[1:], b) - np.maximum(f[:-1], a), 0.0, None)
    if overlap.sum() <= 0:
        raise WindowTooSmall(f"U({a}, {b}) does not meet the window")
    return Density(grid, overlap / (overlap.sum() * grid.dx))


@dataclass
class DensityTrajectory:
    """Density slices ``values[k, i] = u(times[k], x_i)``."""

    grid: SpatialGrid
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape != (self.times.size, self.grid.n_cells):
            raise GridMismatch(
                f"values shape {self.values.shape} does not match "
                f"({self.times.size}, {self.grid.n_cells})"
            )
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @classmethod
    def single(cls, density: Density) -> DensityTrajectory:
        return cls(density.grid, [density.t], density.values[None, :])

    def __len__(self):
        return self.times.size

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def slice(self, k) -> Density:
        return Density(self.grid, self.values[k], float(self.times[k]))

    @property
    def final(self) -> Density:
        return self.slice(-1)

    def index_of(self, t, atol=1e-9) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > atol:
            raise CheckpointOutsideTrajectory(f"t={t} is not a stored time")
        return k

    def at(self, t) -> Density:
        """Slice at time ``t``, linear in time between stored slices."""
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise CheckpointOutsideTrajectory(
                f"t={t} outside [{self.times[0]}, {self.times[-1]}]"
            )
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), self.times.size - 1)
        if k == self.times.size - 1 or np.isclose(self.times[k], t, rtol=0, atol=1e-12):
            return Density(self.grid, self.values[k], float(t))
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return Density(self.grid, (1 - w) * self.values[k] + w * self.values[k + 1], float(t))

    def masses(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.grid.dx
