"""Promotional-holiday scenarios with ground-truth labels.

Four scenario kinds cover the cross of (history shows a promo lift?) x
(forecast shows a promo lift?):

    A  no lift in history, none forecast        -> reasonable
    B  no lift in history, forecast has a spike -> unreasonable
    C  history has a lift, forecast misses it   -> unreasonable
    D  lifts in both, comparable magnitude      -> reasonable

Both holiday timestamps are always drawn and reported (the prompt mentions
them even when sales ignore the promotion).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import SeriesSpec, generate
from .errors import ParameterError
from .metrics import REASONABLE, UNREASONABLE
from .series import TimeGrid, TimeSeries

SCENARIO_KINDS = ("A", "B", "C", "D")

SCENARIO_LABELS = {
    "A": REASONABLE,
    "B": UNREASONABLE,
    "C": UNREASONABLE,
    "D": REASONABLE,
}

# Default spike height as a multiple of the history's value range, and the
# band a scenario-D forecast spike is sampled from relative to the history
# spike ("comparable" magnitude).
DEFAULT_SPIKE_SCALE = 1.5
D_RATIO_RANGE = (0.75, 1.25)


@dataclass(frozen=True)
class PromoScenario:
    kind: str
    history_holiday_t: float
    forecast_holiday_t: float
    spike_magnitude: float
    spike_width: int
    label: str
    forecast_spike_magnitude: float | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "hist_holiday_t": self.history_holiday_t,
            "fcst_holiday_t": self.forecast_holiday_t,
            "label": self.label,
            "spike_magnitude": self.spike_magnitude,
            "spike_width": self.spike_width,
            "forecast_spike_magnitude": self.forecast_spike_magnitude,
        }


def inject_spike(
    series: TimeSeries, t_spike: float, magnitude: float, width: int
) -> TimeSeries:
    """Add a triangular bump peaking at the grid index nearest t_spike,
    decaying linearly to zero over `width` points on each side."""
    grid = series.grid
    if width < 1:
        raise ParameterError(f"width must be >= 1, got {width}")
    last = grid.time_at(grid.n_points - 1)
    if not grid.t0 - grid.dt / 2 <= t_spike <= last + grid.dt / 2:
        raise ParameterError(f"t_spike {t_spike} outside grid [{grid.t0}, {last}]")
    center = int(round((t_spike - grid.t0) / grid.dt))
    center = min(max(center, 0), grid.n_points - 1)
    vals = series.values.copy()
    for j in range(-(width - 1), width):
        idx = center + j
        if 0 <= idx < grid.n_points:
            vals[idx] += magnitude * (1.0 - abs(j) / width)
    return series.with_values(vals)


def build_scenario(
    kind: str,
    base_spec: SeriesSpec,
    grid: TimeGrid,
    seed: int,
    spike_scale: float = DEFAULT_SPIKE_SCALE,
    spike_width: int = 1,
) -> tuple[TimeSeries, PromoScenario]:
    """Draw holiday times and build the series for one scenario kind.

    Holiday times are uniform inside their windows with spike_width points of
    clearance from the window edges, so a spike never bleeds across the
    history/forecast boundary. Draw order is fixed: history time, forecast
    time, then (kind D only) the forecast/history magnitude ratio.
    """
    if kind not in SCENARIO_LABELS:
        raise ParameterError(f"scenario kind must be one of {SCENARIO_KINDS}, got {kind!r}")
    if spike_width < 1:
        raise ParameterError(f"spike_width must be >= 1, got {spike_width}")
    rng = np.random.default_rng(seed)
    base = generate(base_spec, grid)

    clearance = spike_width * grid.dt
    hist_lo = grid.t0 + clearance
    hist_hi = grid.split_time - clearance
    fc_lo = grid.time_at(grid.split_index + 1) + clearance
    fc_hi = grid.time_at(grid.n_points - 1) - clearance
    if hist_lo >= hist_hi or fc_lo >= fc_hi:
        raise ParameterError(
            f"spike_width {spike_width} leaves no room inside the windows"
        )
    hist_t = float(rng.uniform(hist_lo, hist_hi))
    fc_t = float(rng.uniform(fc_lo, fc_hi))

    hist_vals = base.history.values
    value_range = float(np.max(hist_vals) - np.min(hist_vals))
    if value_range == 0.0:
        # flat history (e.g. a step shape that jumped before t0); fall back to
        # the value scale so the spike stays visible and labels stay true
        value_range = max(1.0, abs(float(hist_vals[0])))
    magnitude = spike_scale * value_range

    series = base
    fc_magnitude = None
    if kind in ("C", "D"):
        series = inject_spike(series, hist_t, magnitude, spike_width)
    if kind in ("B", "D"):
        if kind == "D":
            fc_magnitude = float(rng.uniform(*D_RATIO_RANGE)) * magnitude
        else:
            fc_magnitude = magnitude
        series = inject_spike(series, fc_t, fc_magnitude, spike_width)

    scenario = PromoScenario(
        kind=kind,
        history_holiday_t=hist_t,
        forecast_holiday_t=fc_t,
        spike_magnitude=magnitude,
        spike_width=spike_width,
        label=SCENARIO_LABELS[kind],
        forecast_spike_magnitude=fc_magnitude,
    )
    return series, scenario
