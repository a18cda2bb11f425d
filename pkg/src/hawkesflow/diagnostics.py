"""Time-rescaling residuals, QQ data and the one-sample KS test against Exp(1)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientEvents, InvalidParameters, TooFewSamples
from .intensity import ModelTheta, Side, as_stream, scan

KS_MIN_N = 10
KS_EXACTISH_N = 35  # below this the asymptotic p-value is only approximate


@dataclass(frozen=True)
class ResidualSeries:
    side: Side
    taus: np.ndarray

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float)
        if np.any(~(taus > 0)):
            raise InvalidParameters("time-deformed durations must all be > 0")
        taus.setflags(write=False)
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "side", Side.parse(self.side))

    @property
    def n(self) -> int:
        return len(self.taus)


@dataclass(frozen=True)
class KsReport:
    statistic: float
    p_value: float
    n: int
    approximate: bool = False

    @property
    def pass_at_5pct(self) -> bool:
        return self.p_value >= 0.05

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value, "n": self.n,
                "pass_at_5pct": self.pass_at_5pct, "approximate": self.approximate}


def residuals(theta: ModelTheta, events_all, side=None) -> ResidualSeries:
    """Compensator increments between consecutive target-side events.

    The first increment runs from session open. The full two-sided history
    drives the intensity.
    """
    side = theta.target_side if side is None else Side.parse(side)
    if side != theta.target_side:
        raise InvalidParameters(f"theta targets {theta.target_side.label}, asked for {side.label}")
    stream = as_stream(events_all)
    _, cum = scan(theta, stream)
    own = cum[stream.sides == int(side)]
    if len(own) < 2:
        raise InsufficientEvents(f"need at least 2 {side.label} events, got {len(own)}")
    return ResidualSeries(side, np.diff(own, prepend=0.0))


def kolmogorov_sf(x: float, tol: float = 1e-12) -> float:
    """``P(K > x)`` for the limiting Kolmogorov distribution.

    Uses the alternating series for ``x >= 1`` and the equivalent theta-function
    series for the CDF below that, where the alternating one converges slowly.
    Both are truncated once a term drops under ``tol``.
    """
    if x <= 0:
        return 1.0
    if x < 1.0:
        c = -math.pi ** 2 / (8.0 * x * x)
        cdf, k = 0.0, 1
        while True:
            term = math.exp(c * (2 * k - 1) ** 2)
            cdf += term
            if term < tol:
                break
            k += 1
        return min(max(1.0 - math.sqrt(2.0 * math.pi) / x * cdf, 0.0), 1.0)
    total, k = 0.0, 1
    while True:
        term = math.exp(-2.0 * k * k * x * x)
        total += term if k % 2 else -term
        if term < tol:
            break
        k += 1
    return min(max(2.0 * total, 0.0), 1.0)


def ks_statistic(sample) -> float:
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    cdf = -np.expm1(-x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n), 0.0))


def ks_test(series) -> KsReport:
    taus = series.taus if isinstance(series, ResidualSeries) else np.asarray(series, dtype=float)
    n = len(taus)
    if n < KS_MIN_N:
        raise TooFewSamples(f"KS needs n >= {KS_MIN_N}, got {n}")
    d = ks_statistic(taus)
    p = 1.0 if d == 0 else kolmogorov_sf(math.sqrt(n) * d)
    return KsReport(d, p, n, n < KS_EXACTISH_N)


def qq_points(series) -> np.ndarray:
    """``(n, 2)`` array of (Exp(1) quantile, empirical order statistic)."""
    taus = series.taus if isinstance(series, ResidualSeries) else np.asarray(series, dtype=float)
    n = len(taus)
    if n < 2:
        raise TooFewSamples(f"QQ data needs n >= 2, got {n}")
    theo = -np.log1p(-(np.arange(1, n + 1) - 0.5) / n)
    return np.column_stack([theo, np.sort(taus)])
