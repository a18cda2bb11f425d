"""Seasonal piecewise-linear baseline intensity.

Session windows carry wall-clock times (seconds since midnight); the spline
itself is evaluated on seconds since the session opened.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameters, OutOfSession, ReversedInterval

# tolerance for "t is at the session edge" comparisons
_EDGE = 1e-9


def hms(text: str) -> float:
    """Parse ``HH:MM`` or ``HH:MM:SS`` into seconds since midnight."""
    parts = [float(p) for p in str(text).split(":")]
    if not 2 <= len(parts) <= 3:
        raise InvalidParameters(f"bad time of day {text!r}")
    while len(parts) < 3:
        parts.append(0.0)
    h, m, s = parts
    return h * 3600.0 + m * 60.0 + s


def format_hms(seconds: float) -> str:
    seconds = int(round(seconds))
    return f"{seconds // 3600:02d}:{seconds % 3600 // 60:02d}:{seconds % 60:02d}"


@dataclass(frozen=True)
class SessionWindow:
    open: float
    close: float
    knot_times: tuple
    name: str = "session"

    def __post_init__(self):
        knots = tuple(float(x) for x in self.knot_times)
        object.__setattr__(self, "knot_times", knots)
        if len(knots) < 2:
            raise InvalidParameters("a session needs at least two knots")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise InvalidParameters("knot times must be strictly increasing")
        if knots[0] != self.open or knots[-1] != self.close:
            raise InvalidParameters("first knot must equal open and last knot must equal close")

    @property
    def length(self) -> float:
        return self.close - self.open

    @property
    def knot_offsets(self) -> np.ndarray:
        """Knot positions in seconds since open."""
        return np.asarray(self.knot_times) - self.open

    def contains(self, tod: float) -> bool:
        return self.open <= tod <= self.close

    def to_dict(self) -> dict:
        return {"name": self.name, "open": format_hms(self.open),
                "close": format_hms(self.close),
                "knots": [format_hms(k) for k in self.knot_times]}

    @classmethod
    def from_dict(cls, d: dict) -> "SessionWindow":
        knots = [hms(k) if isinstance(k, str) else float(k) for k in d["knots"]]
        open_ = hms(d["open"]) if isinstance(d["open"], str) else float(d["open"])
        close = hms(d["close"]) if isinstance(d["close"], str) else float(d["close"])
        return cls(open=open_, close=close, knot_times=tuple(knots), name=d.get("name", "session"))

    @classmethod
    def relative(cls, knot_offsets, name: str = "session") -> "SessionWindow":
        """Window whose clock starts at zero; handy for synthetic work."""
        knots = tuple(float(x) for x in knot_offsets)
        return cls(open=knots[0], close=knots[-1], knot_times=knots, name=name)


MORNING = SessionWindow(open=hms("09:30"), close=hms("11:30"),
                        knot_times=(hms("09:30"), hms("10:00"), hms("10:30"), hms("11:30")),
                        name="morning")
AFTERNOON = SessionWindow(open=hms("13:00"), close=hms("15:00"),
                          knot_times=(hms("13:00"), hms("14:00"), hms("14:30"), hms("15:00")),
                          name="afternoon")
DEFAULT_SESSIONS = (MORNING, AFTERNOON)


@dataclass(frozen=True)
class BaselineSpline:
    window: SessionWindow
    knot_values: tuple = field(default=())

    def __post_init__(self):
        values = tuple(float(x) for x in self.knot_values)
        object.__setattr__(self, "knot_values", values)
        if len(values) != len(self.window.knot_times):
            raise InvalidParameters(
                f"expected {len(self.window.knot_times)} knot values, got {len(values)}")
        if any(not np.isfinite(x) or x < 0 for x in values):
            raise InvalidParameters("knot values must be finite and >= 0")

    @property
    def xs(self) -> np.ndarray:
        return self.window.knot_offsets

    @property
    def ys(self) -> np.ndarray:
        return np.asarray(self.knot_values)

    def with_values(self, values) -> "BaselineSpline":
        return BaselineSpline(self.window, tuple(values))


def _check_inside(spline: BaselineSpline, t) -> None:
    t = np.asarray(t, dtype=float)
    if np.any(t < -_EDGE) or np.any(t > spline.window.length + _EDGE):
        raise OutOfSession(f"time outside session [0, {spline.window.length}]")


def baseline_eval(spline: BaselineSpline, t):
    """Linear interpolation between knots; ``t`` is seconds since open."""
    _check_inside(spline, t)
    out = np.interp(t, spline.xs, spline.ys)
    return float(out) if np.ndim(out) == 0 else out


def _cumulative_at(xs: np.ndarray, ys: np.ndarray, t: float) -> float:
    # exact integral of the interpolant from xs[0] to t
    seg = np.searchsorted(xs, t, side="right") - 1
    seg = min(max(seg, 0), len(xs) - 2)
    widths = np.diff(xs[: seg + 1])
    full = float(np.sum(0.5 * (ys[:seg] + ys[1: seg + 1]) * widths))
    y_t = ys[seg] + (ys[seg + 1] - ys[seg]) * (t - xs[seg]) / (xs[seg + 1] - xs[seg])
    return full + 0.5 * (ys[seg] + y_t) * (t - xs[seg])


def baseline_integral(spline: BaselineSpline, t0: float, t1: float) -> float:
    """Exact trapezoid integral of the baseline over ``[t0, t1]``."""
    if t1 < t0:
        raise ReversedInterval(f"t1={t1} < t0={t0}")
    _check_inside(spline, [t0, t1])
    xs, ys = spline.xs, spline.ys
    return _cumulative_at(xs, ys, t1) - _cumulative_at(xs, ys, t0)


def hat_basis(xs: np.ndarray, t) -> np.ndarray:
    """Values of the linear B-spline (hat) basis at ``t``; shape ``(len(t), len(xs))``.

    ``baseline_eval(t) == hat_basis(xs, t) @ knot_values``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    eye = np.eye(len(xs))
    return np.stack([np.interp(t, xs, eye[i]) for i in range(len(xs))], axis=1)


def hat_integrals(xs: np.ndarray) -> np.ndarray:
    """Integral of each hat function over the whole session."""
    widths = np.diff(xs)
    out = np.zeros(len(xs))
    out[:-1] += 0.5 * widths
    out[1:] += 0.5 * widths
    return out
