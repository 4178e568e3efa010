import numpy as np
import pytest

from forecast_audit.series import TimeSeries, make_grid


@pytest.fixture
def grid():
    """The canonical synthetic grid: 101 points on [0, 10], split at t=8."""
    return make_grid(0.0, 0.1, 101, 8.0)


@pytest.fixture
def small_grid():
    """6 points, history = first 3, forecast = last 3."""
    return make_grid(0.0, 1.0, 6, 2.0)


def series_with_forecast(grid, history_value, forecast_values):
    """A series with constant history and the given forecast segment."""
    values = np.full(grid.n_points, float(history_value))
    values[grid.split_index + 1 :] = forecast_values
    return TimeSeries(grid, values)
