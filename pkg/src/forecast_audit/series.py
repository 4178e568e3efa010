"""Uniform time grids and the series containers shared by every other module.

A grid is stored as (t0, dt, n_points) plus a derived split index, never as a
float vector, so t_k = t0 + k*dt is recomputed exactly from integers and
boundary checks never suffer accumulated drift. All containers are immutable
after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError

# A split time within this fraction of a step of a grid point counts as
# lying on the point (0.1 * 80 does not always round to 8.0 exactly).
_SPLIT_SNAP = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = t0 + k * dt, k in [0, n_points), split at an index.

    History covers indices [0, split_index]; the forecast segment covers
    (split_index, n_points - 1] and is never empty.
    """

    t0: float
    dt: float
    n_points: int
    split_index: int

    def __post_init__(self):
        if not (self.dt > 0) or not math.isfinite(self.dt):
            raise ParameterError(f"dt must be finite and positive, got {self.dt}")
        if not math.isfinite(self.t0):
            raise ParameterError(f"t0 must be finite, got {self.t0}")
        if self.n_points < 2:
            raise ParameterError(f"grid needs at least 2 points, got {self.n_points}")
        if not 0 <= self.split_index <= self.n_points - 2:
            raise ParameterError(
                f"split_index {self.split_index} leaves no forecast segment "
                f"on a {self.n_points}-point grid"
            )

    def time_at(self, k: int) -> float:
        return self.t0 + k * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_points) * self.dt

    @property
    def split_time(self) -> float:
        return self.time_at(self.split_index)

    @property
    def horizon(self) -> int:
        """Number of forecast points."""
        return self.n_points - 1 - self.split_index

    def to_dict(self) -> dict:
        return {
            "t0": self.t0,
            "dt": self.dt,
            "n_points": self.n_points,
            "split_index": self.split_index,
        }


def make_grid(t0: float, dt: float, n_points: int, split_time: float) -> TimeGrid:
    """Build a grid whose split index is the largest k with t_k <= split_time.

    Raises ParameterError for non-positive dt, fewer than 2 points, or a
    split time outside [t0, t_last).
    """
    if not (dt > 0) or not math.isfinite(dt):
        raise ParameterError(f"dt must be finite and positive, got {dt}")
    if n_points < 2:
        raise ParameterError(f"grid needs at least 2 points, got {n_points}")
    if not math.isfinite(split_time):
        raise ParameterError(f"split_time must be finite, got {split_time}")
    k = int(math.floor((split_time - t0) / dt + _SPLIT_SNAP))
    if k < 0 or k > n_points - 2:
        raise ParameterError(
            f"split_time {split_time} outside [{t0}, {t0 + (n_points - 1) * dt})"
        )
    return TimeGrid(t0=t0, dt=dt, n_points=n_points, split_index=k)


@dataclass(frozen=True)
class SeriesView:
    """A read-only (times, values) window onto one segment of a series."""

    times: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class TimeSeries:
    """Finite values sampled on a TimeGrid."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or len(vals) != self.grid.n_points:
            raise DataError(
                f"expected {self.grid.n_points} values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise DataError("series values must all be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def history(self) -> SeriesView:
        k = self.grid.split_index + 1
        return SeriesView(self.grid.times[:k], self.values[:k])

    @property
    def forecast(self) -> SeriesView:
        k = self.grid.split_index + 1
        return SeriesView(self.grid.times[k:], self.values[k:])

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.grid, values)

    def to_dict(self) -> dict:
        return {
            "t0": self.grid.t0,
            "dt": self.grid.dt,
            "split_index": self.grid.split_index,
            "values": [float(v) for v in self.values],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TimeSeries":
        grid = TimeGrid(
            t0=float(d["t0"]),
            dt=float(d["dt"]),
            n_points=len(d["values"]),
            split_index=int(d["split_index"]),
        )
        return cls(grid, np.asarray(d["values"], dtype=float))


def split(series: TimeSeries) -> tuple[SeriesView, SeriesView]:
    """History/forecast views; their concatenation is the original values."""
    return series.history, series.forecast


def join(grid: TimeGrid, history, forecast) -> TimeSeries:
    """Rebuild a series from its two segments (inverse of split)."""
    h = history.values if isinstance(history, SeriesView) else np.asarray(history, float)
    f = forecast.values if isinstance(forecast, SeriesView) else np.asarray(forecast, float)
    return TimeSeries(grid, np.concatenate([h, f]))


@dataclass(frozen=True)
class QuantileForecast:
    """Per-level forecast paths over a shared horizon.

    Levels are strictly increasing in (0, 1); at every time step the values
    must be non-decreasing across levels. A crossing is a data error and is
    rejected rather than repaired.
    """

    levels: np.ndarray
    paths: np.ndarray = field(repr=False)

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        paths = np.asarray(self.paths, dtype=float)
        if levels.ndim != 1 or len(levels) == 0:
            raise DataError("levels must be a non-empty 1-d vector")
        if np.any(levels <= 0) or np.any(levels >= 1):
            raise DataError("levels must lie strictly inside (0, 1)")
        if np.any(np.diff(levels) <= 0):
            raise DataError("levels must be strictly increasing")
        if paths.ndim != 2 or paths.shape[0] != len(levels) or paths.shape[1] == 0:
            raise DataError(
                f"paths must be (n_levels, horizon), got shape {paths.shape}"
            )
        if not np.all(np.isfinite(paths)):
            raise DataError("forecast paths must be finite")
        if np.any(np.diff(paths, axis=0) < 0):
            raise DataError("quantile paths cross: values decrease across levels")
        levels = levels.copy()
        paths = paths.copy()
        levels.setflags(write=False)
        paths.setflags(write=False)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "paths", paths)

    @property
    def horizon(self) -> int:
        return self.paths.shape[1]

    def has_level(self, q: float, tol: float = 1e-9) -> bool:
        return bool(np.any(np.abs(self.levels - q) <= tol))

    def path_at(self, q: float, tol: float = 1e-9) -> np.ndarray:
        """The path for level q (matched within tol)."""
        idx = np.nonzero(np.abs(self.levels - q) <= tol)[0]
        if len(idx) == 0:
            raise ParameterError(f"forecast has no quantile level {q}")
        return self.paths[idx[0]]

    def to_dict(self) -> dict:
        return {
            f"{q:g}": [float(v) for v in path]
            for q, path in zip(self.levels, self.paths)
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantileForecast":
        try:
            items = sorted((float(k), np.asarray(v, float)) for k, v in d.items())
        except (TypeError, ValueError) as exc:
            raise DataError(f"bad quantile mapping: {exc}") from exc
        levels = np.array([q for q, _ in items])
        lengths = {len(p) for _, p in items}
        if len(lengths) != 1:
            raise DataError(f"quantile paths have unequal lengths {sorted(lengths)}")
        return cls(levels, np.vstack([p for _, p in items]))
