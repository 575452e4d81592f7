# denots/interpolation.py
"""Irregular time series and the natural cubic spline control path.

Each channel is splined through its own observed points only (NaN marks a
missing entry).  Between the first observation of a channel and the start
of the window the channel holds its first observed value, likewise at the
end, so a partially observed channel still covers [0, T].
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DomainError, ShapeError


# ---------------- TimeSeries ----------------
@dataclass(frozen=True)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    target: Any = None
    query_times: Optional[np.ndarray] = None
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or values.ndim != 2 or values.shape[0] != times.shape[0]:
            raise ShapeError("TimeSeries", times.shape, values.shape)
        if times.shape[0] < 2:
            raise DomainError("a time series needs at least two timestamps")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.query_times is not None:
            object.__setattr__(self, "query_times", np.asarray(self.query_times, dtype=np.float64))

    @property
    def n(self) -> int:
        return int(self.times.shape[0])

    @property
    def u(self) -> int:
        return int(self.values.shape[1])

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def mask(self) -> np.ndarray:
        """True where a value is observed."""
        return ~np.isnan(self.values)

    @property
    def timeframe(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def horizon(self) -> float:
        """Last time the model must reach: T, or the last forecast query."""
        if self.query_times is not None and self.query_times.size:
            return max(self.T, float(self.query_times[-1]))
        return self.T

    def is_increasing(self) -> bool:
        return bool(np.all(np.diff(self.times) > 0))

    def with_values(self, values: np.ndarray) -> "TimeSeries":
        return replace(self, values=np.asarray(values, dtype=np.float64))

    def with_times(self, times: np.ndarray, query_times: Optional[np.ndarray] = None) -> "TimeSeries":
        return replace(self, times=times, query_times=query_times)

    def with_dt_channel(self) -> "TimeSeries":
        """Append t_k - t_{k-1} (0 for the first row) as an extra feature."""
        dt = np.concatenate([[0.0], np.diff(self.times)])
        return self.with_values(np.column_stack([self.values, dt]))


def median_timeframe(series: Sequence[TimeSeries]) -> float:
    if not series:
        raise DomainError("median timeframe of an empty dataset")
    m = float(np.median([s.timeframe for s in series]))
    if m <= 0:
        raise DomainError("median timeframe must be positive")
    return m


# ---------------- Spline path ----------------
@dataclass(frozen=True)
class _Channel:
    knots: np.ndarray
    spline: Optional[CubicSpline]
    constant: float


class CubicSplinePath:
    """Per-channel natural cubic splines on the domain [t0, T]."""

    def __init__(self, t0: float, T: float, channels: list[_Channel], joint: Optional[CubicSpline] = None):
        self.t0 = float(t0)
        self.T = float(T)
        self._channels = channels
        self._joint = joint

    @property
    def u(self) -> int:
        return len(self._channels)

    def knots(self, channel: int) -> np.ndarray:
        return self._channels[channel].knots

    def _check(self, t: float) -> None:
        if not (self.t0 <= t <= self.T):
            raise DomainError(f"t={t!r} outside the path domain [{self.t0}, {self.T}]")

    def _value(self, t: float, nu: int) -> np.ndarray:
        if self._joint is not None:
            return np.asarray(self._joint(t, nu), dtype=np.float64)
        out = np.empty(self.u)
        for i, ch in enumerate(self._channels):
            if ch.spline is None:
                out[i] = ch.constant if nu == 0 else 0.0
            elif ch.knots[0] <= t <= ch.knots[-1]:
                out[i] = ch.spline(t, nu)
            else:
                # held constant outside the channel's observed range
                out[i] = ch.spline(np.clip(t, ch.knots[0], ch.knots[-1])) if nu == 0 else 0.0
        return out

    def eval(self, t: float) -> np.ndarray:
        self._check(t)
        return self._value(float(t), 0)

    def eval_derivative(self, t: float, order: int = 1) -> np.ndarray:
        self._check(t)
        if order not in (1, 2, 3):
            raise DomainError("derivative order must be 1, 2 or 3")
        return self._value(float(t), order)

    def eval_clamped(self, t: float) -> np.ndarray:
        """Value at t clipped into the domain; forecasting reads past T this way."""
        return self._value(float(min(max(t, self.t0), self.T)), 0)

    def eval_many(self, ts: np.ndarray) -> np.ndarray:
        """Values at every time in ``ts``, shape (len(ts), u)."""
        ts = np.asarray(ts, dtype=np.float64)
        if ts.ndim != 1:
            raise ShapeError("eval_many", ts.shape)
        if ts.size and (ts.min() < self.t0 or ts.max() > self.T):
            raise DomainError(f"times outside the path domain [{self.t0}, {self.T}]")
        if self._joint is not None:
            return np.asarray(self._joint(ts), dtype=np.float64).reshape(ts.size, self.u)
        out = np.empty((ts.size, self.u))
        for i, t in enumerate(ts):
            out[i] = self._value(float(t), 0)
        return out


def _fit_channel(times: np.ndarray, column: np.ndarray) -> _Channel:
    observed = ~np.isnan(column)
    knots = times[observed]
    if knots.size == 0:
        return _Channel(knots, None, 0.0)
    if knots.size == 1:
        return _Channel(knots, None, float(column[observed][0]))
    return _Channel(knots, CubicSpline(knots, column[observed], bc_type="natural"), 0.0)


def fit_natural_spline(series: TimeSeries) -> CubicSplinePath:
    times = series.times
    if not series.is_increasing():
        raise DomainError("timestamps must be strictly increasing")
    t0, T = float(times[0]), float(times[-1])
    mask = series.mask
    if mask.all():
        joint = CubicSpline(times, series.values, bc_type="natural", axis=0)
        channels = [_Channel(times, CubicSpline(times, series.values[:, i], bc_type="natural"), 0.0)
                    for i in range(series.u)]
        return CubicSplinePath(t0, T, channels, joint)
    return CubicSplinePath(t0, T, [_fit_channel(times, series.values[:, i]) for i in range(series.u)])
