"""Forecast-segment corruptions and the severity filter for labeled cases.

All four perturbations leave history values untouched and act only on the
forecast segment. Identity parameters (omega=0, beta=1, alpha=1, gamma=0)
reproduce the input, and the trend/stretch variants are anchored so the first
forecast point keeps its unperturbed value.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass

import numpy as np

from .basis import SeriesSpec, evaluate, generate
from .errors import ParameterError
from .series import TimeGrid, TimeSeries

# Denominator guard for zero-valued points in the SMAPE ratio.
SMAPE_EPS = 1e-10


def vertical_shift(series: TimeSeries, omega: float) -> TimeSeries:
    """Shift the forecast segment by omega times its own mean."""
    fc = series.forecast
    shift = omega * float(np.mean(fc.values))
    vals = series.values.copy()
    vals[series.grid.split_index + 1 :] += shift
    return series.with_values(vals)


@dataclass(frozen=True)
class LinearFit:
    """Ordinary least-squares line plus the residuals that rebuild the data."""

    slope: float
    intercept: float
    residuals: np.ndarray

    def reconstruct(self, t) -> np.ndarray:
        return self.slope * np.asarray(t, float) + self.intercept + self.residuals


def fit_linear(t, y) -> LinearFit:
    """Least-squares line through (t, y); residuals = y - (m*t + b)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.ndim != 1 or t.shape != y.shape or len(t) < 2:
        raise ParameterError("need at least 2 (t, y) pairs of equal length")
    if np.ptp(t) == 0:
        raise ParameterError("all t values are equal; line is undetermined")
    m, b = np.polyfit(t, y, 1)
    residuals = y - (m * t + b)
    return LinearFit(slope=float(m), intercept=float(b), residuals=residuals)


def trend_modify(series: TimeSeries, beta: float) -> TimeSeries:
    """Rescale the forecast's fitted slope by beta, keeping residuals.

    The intercept is re-solved so the value at the first forecast point is
    unchanged (continuity anchor).
    """
    fc = series.forecast
    if len(fc) < 2:
        raise ParameterError("trend modification needs at least 2 forecast points")
    fit = fit_linear(fc.times, fc.values)
    m2 = beta * fit.slope
    t_c = fc.times[0]
    b2 = fc.values[0] - m2 * t_c - fit.residuals[0]
    vals = series.values.copy()
    vals[series.grid.split_index + 1 :] = m2 * fc.times + b2 + fit.residuals
    return series.with_values(vals)


def time_stretch(spec: SeriesSpec, grid: TimeGrid, alpha: float) -> TimeSeries:
    """Resample the forecast segment of the generating function at step
    alpha*dt, then offset it so the first forecast point matches the
    unperturbed series.

    Needs the spec (not just sampled values) because stretching re-evaluates
    the generating function at new times. History is the unstretched series.
    """
    if not alpha > 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    base = generate(spec, grid)
    k0 = grid.split_index + 1
    ks = np.arange(k0, grid.n_points)
    stretched = evaluate(spec, grid.t0 + ks * (alpha * grid.dt))
    delta = base.values[k0] - stretched[0]
    vals = base.values.copy()
    vals[k0:] = stretched + delta
    return base.with_values(vals)


def random_spikes(
    series: TimeSeries, gamma: float, n_max: int, seed: int
) -> tuple[TimeSeries, np.ndarray]:
    """Add n ~ U{1..n_max} spikes of magnitude gamma * max(forecast) at
    distinct forecast indices, each sign a fair independent coin.

    Returns the perturbed series and the spiked indices (ascending, absolute
    positions in the full series). Draw order is fixed: n, positions, signs.
    """
    fc = series.forecast
    horizon = len(fc)
    if n_max < 1:
        raise ParameterError(f"n_max must be >= 1, got {n_max}")
    if n_max > horizon:
        raise ParameterError(f"n_max {n_max} exceeds forecast length {horizon}")
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    offsets = rng.choice(horizon, size=n, replace=False)
    signs = np.where(rng.integers(0, 2, size=n) == 1, 1.0, -1.0)
    eps = gamma * float(np.max(fc.values))
    vals = series.values.copy()
    positions = series.grid.split_index + 1 + offsets
    vals[positions] += signs * eps
    return series.with_values(vals), np.sort(positions)


def smape(actual, predicted) -> float:
    """Symmetric mean absolute percentage error on the 0-200 scale."""
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.ndim != 1 or a.shape != p.shape or a.size == 0:
        raise ParameterError("need two non-empty vectors of equal length")
    denom = np.maximum(np.abs(a) + np.abs(p), SMAPE_EPS)
    return float(100.0 / a.size * np.sum(2.0 * np.abs(p - a) / denom))


def filter_worst(cases, fraction: float, key=None) -> list:
    """Keep the floor(fraction * n) cases with the highest SMAPE.

    Ties are broken by input position (ascending), so the result is
    deterministic. `key` extracts the score; by default cases expose a
    `.smape` attribute.
    """
    if len(cases) == 0:
        raise ParameterError("cannot filter an empty case list")
    if not 0 < fraction <= 1:
        raise ParameterError(f"fraction must be in (0, 1], got {fraction}")
    key = key or operator.attrgetter("smape")
    order = sorted(range(len(cases)), key=lambda i: (-key(cases[i]), i))
    retained = math.floor(fraction * len(cases))
    return [cases[i] for i in order[:retained]]
