"""Particle ensembles, path bundles and jump event logs."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import CheckpointOutsideTrajectory, EmptyEnsemble


@dataclass(frozen=True)
class ParticleEnsemble:
    """N space-time particles sharing the start clock ``start_clock``.

    The clock component is never integrated: after ``step`` Euler steps of
    size ``dt`` it is ``start_clock + step * dt``, computed by one
    multiplication so it is exact in the sense of being reproducible.
    ``ids`` are the particles' random-stream keys.
    """

    positions: np.ndarray
    start_clock: float = 0.0
    weights: np.ndarray | None = None
    ids: np.ndarray | None = None
    step: int = 0
    dt: float | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim not in (1, 2) or pos.shape[0] < 1:
            raise EmptyEnsemble("an ensemble needs at least one particle")
        if pos.ndim == 2 and pos.shape[1] != 2:
            raise ValueError("only d = 1 or d = 2 ensembles are supported")
        object.__setattr__(self, "positions", pos)
        n = pos.shape[0]
        w = np.full(n, 1.0 / n) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (n,) or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        object.__setattr__(self, "weights", w)
        ids = np.arange(n, dtype=np.int64) if self.ids is None else np.asarray(self.ids, np.int64)
        if ids.shape != (n,):
            raise ValueError("ids must have one entry per particle")
        object.__setattr__(self, "ids", ids)
        if self.start_clock < 0:
            raise ValueError("start clock must be nonnegative")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return 1 if self.positions.ndim == 1 else 2

    @property
    def elapsed(self) -> float:
        return 0.0 if self.dt is None else self.step * self.dt

    @property
    def clock(self) -> float:
        return self.start_clock + self.elapsed

    def with_positions(self, positions, step=None, dt=None) -> ParticleEnsemble:
        return replace(self, positions=positions,
                       step=self.step if step is None else step,
                       dt=self.dt if dt is None else dt)


@dataclass
class EventLog:
    """Accepted jumps, sorted by (path_id, t)."""

    path_id: np.ndarray
    t: np.ndarray
    x_pre: np.ndarray
    x_post: np.ndarray

    def __len__(self):
        return self.t.size

    def counts(self, n_paths, t_max=np.inf) -> np.ndarray:
        sel = self.t <= t_max
        return np.bincount(self.path_id[sel], minlength=n_paths)

    def sum_per_path(self, values, n_paths, t_max=np.inf) -> np.ndarray:
        sel = self.t <= t_max
        return np.bincount(self.path_id[sel], weights=values[sel], minlength=n_paths)

    @classmethod
    def empty(cls):
        z = np.zeros(0)
        return cls(np.zeros(0, dtype=np.int64), z, z.copy(), z.copy())


@dataclass
class PathBundle:
    """States of N paths recorded at step indices ``record_steps``.

    ``states[i, r]`` is path i at clock ``start_clock + record_steps[r]*dt``.
    With full recording, ``record_steps = 0..M``.
    """

    start_clock: float
    dt: float
    steps: int
    record_steps: np.ndarray
    states: np.ndarray
    ids: np.ndarray
    step0: int = 0
    events: EventLog | None = None
    escaped: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        self.record_steps = np.asarray(self.record_steps, dtype=np.int64)
        if self.states.shape[:2] != (self.ids.size, self.record_steps.size):
            raise ValueError("states shape inconsistent with ids and record_steps")

    @property
    def n_paths(self) -> int:
        return self.ids.size

    @property
    def times(self) -> np.ndarray:
        """Elapsed times of the recorded states."""
        return (self.step0 + self.record_steps) * self.dt

    @property
    def clocks(self) -> np.ndarray:
        return self.start_clock + self.times

    def index_of(self, t, atol=1e-9) -> int:
        """Column of the recording at elapsed time ``t``."""
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > atol:
            raise CheckpointOutsideTrajectory(f"no recording at elapsed time {t}")
        return k

    def at(self, t) -> np.ndarray:
        return self.states[:, self.index_of(t)]

    def final_ensemble(self, weights=None) -> ParticleEnsemble:
        return ParticleEnsemble(self.states[:, -1], self.start_clock, weights, self.ids,
                                step=int(self.step0 + self.record_steps[-1]), dt=self.dt)
