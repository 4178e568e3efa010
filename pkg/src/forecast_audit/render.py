"""Deterministic PNG rendering of the critic's visual input.

History is drawn in black up to the split, the forecast in blue after it;
probabilistic forecasts add a shaded 10-90% band around the median line.
With test_mode on, all text is suppressed and the axes fill the canvas, so
identical inputs produce byte-identical PNGs (font rasterization is the only
platform-dependent part of the output).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .errors import ParameterError
from .series import QuantileForecast, SeriesView

# Fraction of the data extent added as padding on each axis side.
AXIS_PAD = 0.05


@dataclass(frozen=True)
class PlotStyle:
    width_px: int = 800
    height_px: int = 500
    history_color: str = "#000000"
    forecast_color: str = "#1f77b4"
    band_color: str = "#1f77b4"
    actuals_color: str = "#d62728"
    band_opacity: float = 0.3
    draw_legend: bool = True
    test_mode: bool = False
    line_width: float = 2.0
    dpi: int = 100

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ParameterError("canvas dimensions must be positive")
        if self.history_color.lower() == self.forecast_color.lower():
            raise ParameterError("history and forecast colors must differ")
        if not 0 < self.band_opacity <= 1:
            raise ParameterError(f"band_opacity must be in (0, 1], got {self.band_opacity}")

    def to_dict(self) -> dict:
        return {
            "width_px": self.width_px,
            "height_px": self.height_px,
            "history_color": self.history_color,
            "forecast_color": self.forecast_color,
            "band_color": self.band_color,
            "actuals_color": self.actuals_color,
            "band_opacity": self.band_opacity,
            "draw_legend": self.draw_legend,
            "test_mode": self.test_mode,
            "line_width": self.line_width,
            "dpi": self.dpi,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlotStyle":
        return replace(cls(), **d) if d else cls()


def _padded(lo: float, hi: float) -> tuple[float, float]:
    span = hi - lo
    if span == 0:
        span = abs(hi) if hi != 0 else 1.0
    return lo - AXIS_PAD * span, hi + AXIS_PAD * span


def _new_axes(style: PlotStyle):
    fig = Figure(
        figsize=(style.width_px / style.dpi, style.height_px / style.dpi),
        dpi=style.dpi,
    )
    FigureCanvasAgg(fig)
    if style.test_mode:
        ax = fig.add_axes((0.0, 0.0, 1.0, 1.0))
        ax.set_axis_off()
    else:
        ax = fig.add_subplot()
        ax.set_xlabel("time")
        ax.set_ylabel("value")
    return fig, ax


def _finish(fig, ax, style: PlotStyle, x_ext, y_ext) -> bytes:
    ax.set_xlim(*_padded(*x_ext))
    ax.set_ylim(*_padded(*y_ext))
    if not style.test_mode and style.draw_legend:
        ax.legend(loc="best")
    buf = io.BytesIO()
    # Dropping the Software tag keeps the PNG free of environment-dependent text.
    fig.savefig(buf, format="png", metadata={"Software": None})
    return buf.getvalue()


def _check_segments(history: SeriesView, forecast_times: np.ndarray):
    if len(history) == 0 or len(forecast_times) == 0:
        raise ParameterError("history and forecast segments must be non-empty")
    if forecast_times[0] <= history.times[-1]:
        raise ParameterError("forecast must start strictly after the history ends")


def _plot_segment(ax, times, values, color, lw, label):
    # single-point segments would be invisible as a bare line
    marker = "o" if len(np.atleast_1d(times)) == 1 else None
    ax.plot(times, values, color=color, lw=lw, label=label, marker=marker)


def render_point(
    history: SeriesView,
    forecast: SeriesView,
    style: PlotStyle | None = None,
    actuals=None,
) -> bytes:
    """Render a point forecast: history polyline up to the split, forecast
    polyline after it. Optional future actuals are overlaid on the forecast
    times. Returns PNG bytes."""
    style = style or PlotStyle()
    _check_segments(history, np.asarray(forecast.times))
    fig, ax = _new_axes(style)
    _plot_segment(ax, history.times, history.values,
                  style.history_color, style.line_width, "history")
    _plot_segment(ax, forecast.times, forecast.values,
                  style.forecast_color, style.line_width, "forecast")
    ys = [history.values, forecast.values]
    if actuals is not None:
        actuals = np.asarray(actuals, dtype=float)
        if actuals.shape != np.asarray(forecast.values).shape:
            raise ParameterError("actuals must match the forecast segment length")
        _plot_segment(ax, forecast.times, actuals,
                      style.actuals_color, style.line_width, "actuals")
        ys.append(actuals)
    x_ext = (float(history.times[0]), float(forecast.times[-1]))
    y_all = np.concatenate(ys)
    return _finish(fig, ax, style, x_ext, (float(y_all.min()), float(y_all.max())))


def render_probabilistic(
    history: SeriesView,
    forecast: QuantileForecast,
    style: PlotStyle | None = None,
    actuals=None,
) -> bytes:
    """Render history plus a quantile forecast: 10-90% shaded band with the
    median as a line. Forecast times continue the history's uniform grid.
    Requires levels 0.1, 0.5 and 0.9. Returns PNG bytes."""
    style = style or PlotStyle()
    if len(history) == 0:
        raise ParameterError("history segment must be non-empty")
    for q in (0.1, 0.5, 0.9):
        if not forecast.has_level(q):
            raise ParameterError(f"probabilistic rendering needs quantile level {q}")
    ht = np.asarray(history.times, dtype=float)
    dt = float(ht[1] - ht[0]) if len(ht) > 1 else 1.0
    fc_times = ht[-1] + dt * np.arange(1, forecast.horizon + 1)

    lo = forecast.path_at(0.1)
    med = forecast.path_at(0.5)
    hi = forecast.path_at(0.9)

    fig, ax = _new_axes(style)
    ax.fill_between(
        fc_times, lo, hi,
        color=style.band_color, alpha=style.band_opacity, linewidth=0,
        label="10-90% band",
    )
    _plot_segment(ax, history.times, history.values,
                  style.history_color, style.line_width, "history")
    _plot_segment(ax, fc_times, med,
                  style.forecast_color, style.line_width, "median forecast")
    ys = [np.asarray(history.values, float), lo, med, hi]
    if actuals is not None:
        actuals = np.asarray(actuals, dtype=float)
        if actuals.shape != (forecast.horizon,):
            raise ParameterError("actuals must match the forecast horizon")
        _plot_segment(ax, fc_times, actuals,
                      style.actuals_color, style.line_width, "actuals")
        ys.append(actuals)
    x_ext = (float(ht[0]), float(fc_times[-1]))
    y_all = np.concatenate(ys)
    return _finish(fig, ax, style, x_ext, (float(y_all.min()), float(y_all.max())))


def data_to_pixel_x(
    t: float, x_ext: tuple[float, float], width_px: int
) -> float:
    """Pixel x of time t for a test_mode canvas (axes fill the full width).

    Mirrors the axis scaling used by the renderer (extent plus 5% padding);
    handy for pixel-level assertions on rendered output.
    """
    lo, hi = _padded(*x_ext)
    return (t - lo) / (hi - lo) * width_px
