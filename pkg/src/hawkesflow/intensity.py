"""Conditional intensities of the bivariate marked process and their integrals.

Intensities are left-continuous: an event at exactly ``t`` is not part of
the history seen by ``lambda(t)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import _fast
from .baseline import BaselineSpline, baseline_eval, baseline_integral
from .errors import (InvalidParameters, MixedKernelForms, ReversedInterval,
                     TimeRegression, UnsortedHistory)
from .kernels import KernelForm, KernelParams, kernel_eval


class Side(enum.IntEnum):
    BUY = 1
    SELL = 2

    @classmethod
    def parse(cls, value) -> "Side":
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        text = str(value).strip().lower()
        if text in ("buy", "b", "1"):
            return cls.BUY
        if text in ("sell", "s", "2"):
            return cls.SELL
        raise InvalidParameters(f"unknown side {value!r}")

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class MarkedEvent:
    t: float
    side: Side
    volume: float


class EventStream:
    """Time-ordered events of both sides, stored column-wise."""

    __slots__ = ("times", "sides", "volumes")

    def __init__(self, times, sides, volumes, check: bool = True):
        self.times = np.ascontiguousarray(times, dtype=np.float64)
        self.sides = np.ascontiguousarray(sides, dtype=np.int64)
        self.volumes = np.ascontiguousarray(volumes, dtype=np.float64)
        if not (len(self.times) == len(self.sides) == len(self.volumes)):
            raise InvalidParameters("times, sides and volumes must have equal length")
        if check:
            if np.any(np.diff(self.times) < 0):
                raise UnsortedHistory("event times must be non-decreasing")
            if len(self.sides) and not np.all((self.sides == 1) | (self.sides == 2)):
                raise InvalidParameters("sides must be 1 (buy) or 2 (sell)")
            if np.any(self.volumes < 0):
                raise InvalidParameters("volumes must be >= 0")

    @classmethod
    def from_events(cls, events: Sequence[MarkedEvent]) -> "EventStream":
        return cls([e.t for e in events], [int(e.side) for e in events],
                   [e.volume for e in events])

    @classmethod
    def empty(cls) -> "EventStream":
        return cls([], [], [])

    def to_events(self) -> list[MarkedEvent]:
        return [MarkedEvent(float(t), Side(int(s)), float(v))
                for t, s, v in zip(self.times, self.sides, self.volumes)]

    def __len__(self) -> int:
        return len(self.times)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (np.array_equal(self.times, other.times)
                and np.array_equal(self.sides, other.sides)
                and np.array_equal(self.volumes, other.volumes))

    def __repr__(self) -> str:
        return f"EventStream(n={len(self)}, buys={self.count(Side.BUY)}, sells={self.count(Side.SELL)})"

    def count(self, side) -> int:
        return int(np.sum(self.sides == int(side)))

    def side_times(self, side) -> np.ndarray:
        return self.times[self.sides == int(side)]

    def side_volumes(self, side) -> np.ndarray:
        return self.volumes[self.sides == int(side)]


def as_stream(events) -> EventStream:
    if isinstance(events, EventStream):
        return events
    return EventStream.from_events(list(events))


@dataclass(frozen=True)
class ModelTheta:
    """Parameters driving one side's intensity within one session.

    ``kernels[0]`` is the channel excited by buys, ``kernels[1]`` by sells.
    """

    target_side: Side
    kernels: tuple
    baseline: BaselineSpline

    def __post_init__(self):
        object.__setattr__(self, "target_side", Side.parse(self.target_side))
        kernels = tuple(self.kernels)
        object.__setattr__(self, "kernels", kernels)
        if len(kernels) != 2 or not all(isinstance(k, KernelParams) for k in kernels):
            raise InvalidParameters("ModelTheta needs exactly two KernelParams (buy, sell sources)")
        if kernels[0].form is not kernels[1].form:
            raise MixedKernelForms("both channels of a side must share the kernel form")

    @property
    def form(self) -> KernelForm:
        return self.kernels[0].form

    @property
    def n_params(self) -> int:
        return len(self.baseline.knot_values) + 4 * len(self.kernels)

    def kernel(self, source) -> KernelParams:
        return self.kernels[int(source) - 1]

    def channel_arrays(self):
        """``(ks, bs, alphas, betas, sign)`` in the layout used by the compiled loops."""
        ks = np.array([p.k for p in self.kernels])
        bs = np.array([p.b for p in self.kernels])
        alphas = np.array([p.alpha for p in self.kernels])
        betas = np.array([p.beta for p in self.kernels])
        return ks, bs, alphas, betas, self.form.sign

    def to_dict(self) -> dict:
        return {
            "target_side": self.target_side.label,
            "kernels": {Side(j + 1).label: p.to_dict() for j, p in enumerate(self.kernels)},
            "baseline": {"window": self.baseline.window.to_dict(),
                         "knot_values": list(self.baseline.knot_values)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelTheta":
        from .baseline import SessionWindow
        window = SessionWindow.from_dict(d["baseline"]["window"])
        return cls(target_side=Side.parse(d["target_side"]),
                   kernels=(KernelParams.from_dict(d["kernels"]["buy"]),
                            KernelParams.from_dict(d["kernels"]["sell"])),
                   baseline=BaselineSpline(window, tuple(d["baseline"]["knot_values"])))


class ModelPair(NamedTuple):
    buy: ModelTheta
    sell: ModelTheta

    def theta(self, side) -> ModelTheta:
        return self[int(side) - 1]

    @property
    def form(self) -> KernelForm:
        if self.buy.form is not self.sell.form:
            raise MixedKernelForms("buy and sell sides use different kernel forms")
        return self.buy.form


# ---------------------------------------------------------------------------
# direct evaluation

def intensity_at(theta: ModelTheta, history, t: float) -> float:
    """``mu(t)`` plus the kernel contributions of events strictly before ``t``."""
    stream = as_stream(history)
    if len(stream) and np.any(np.diff(stream.times) < 0):
        raise UnsortedHistory("history must be sorted by time")
    mu = baseline_eval(theta.baseline, t)
    past = stream.times < t
    total = mu
    for j, params in enumerate(theta.kernels):
        sel = past & (stream.sides == j + 1)
        if np.any(sel):
            total += float(np.sum(kernel_eval(params, t - stream.times[sel], stream.volumes[sel])))
    return total


def _channel_integral(params: KernelParams, lo, hi, v):
    w = params.k * np.exp(params.b * v)
    slow = (np.exp(-params.alpha * lo) - np.exp(-params.alpha * hi)) / params.alpha
    fast = (np.exp(-params.beta * lo) - np.exp(-params.beta * hi)) / params.beta
    return w * (slow + params.form.sign * fast)


def compensator(theta: ModelTheta, events, t0: float, t1: float) -> float:
    """Closed-form ``int_{t0}^{t1} lambda(u) du``."""
    if t1 < t0:
        raise ReversedInterval(f"t1={t1} < t0={t0}")
    stream = as_stream(events)
    total = baseline_integral(theta.baseline, t0, t1)
    past = stream.times < t1
    for j, params in enumerate(theta.kernels):
        sel = past & (stream.sides == j + 1)
        if not np.any(sel):
            continue
        tm = stream.times[sel]
        lo = np.maximum(t0 - tm, 0.0)
        hi = t1 - tm
        total += float(np.sum(_channel_integral(params, lo, hi, stream.volumes[sel])))
    return total


# ---------------------------------------------------------------------------
# recursive evaluation

def scan(theta: ModelTheta, events) -> tuple[np.ndarray, np.ndarray]:
    """Intensity and cumulative compensator from 0 at every event time, in O(N).

    Both values are pre-jump (the event at ``t_n`` itself is excluded).
    """
    stream = as_stream(events)
    ks, bs, alphas, betas, sign = theta.channel_arrays()
    xs, ys = theta.baseline.xs, theta.baseline.ys
    lam, comp_exc = _fast.scan_target(stream.times, stream.sides, stream.volumes,
                                      int(theta.target_side), xs, ys, ks, bs, alphas, betas, sign)
    if len(stream):
        comp_exc = comp_exc + _baseline_cumulative(theta.baseline, stream.times)
    return lam, comp_exc


def _baseline_cumulative(spline: BaselineSpline, ts: np.ndarray) -> np.ndarray:
    xs, ys = spline.xs, spline.ys
    knots_cum = np.concatenate([[0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs))])
    seg = np.clip(np.searchsorted(xs, ts, side="right") - 1, 0, len(xs) - 2)
    y_t = ys[seg] + (ys[seg + 1] - ys[seg]) * (ts - xs[seg]) / (xs[seg + 1] - xs[seg])
    return knots_cum[seg] + 0.5 * (ys[seg] + y_t) * (ts - xs[seg])


class DecayState:
    """Exponential accumulators for every (target, source) channel.

    ``slow[i, j]`` holds ``sum_m e^{b v_m} e^{-alpha (t - t_m)}`` over past
    source-``j`` events, ``fast[i, j]`` the same with ``beta``. Single owner;
    :func:`advance_state` returns a new state rather than mutating.
    """

    def __init__(self, thetas: Sequence[ModelTheta], slow=None, fast=None,
                 last_update_time: float = 0.0):
        self.thetas = tuple(thetas)
        shape = (len(self.thetas), 2)
        self.alphas = np.array([[p.alpha for p in th.kernels] for th in self.thetas])
        self.betas = np.array([[p.beta for p in th.kernels] for th in self.thetas])
        self.bs = np.array([[p.b for p in th.kernels] for th in self.thetas])
        self.ks = np.array([[p.k for p in th.kernels] for th in self.thetas])
        self.signs = np.array([th.form.sign for th in self.thetas])
        self.slow = np.zeros(shape) if slow is None else np.array(slow, dtype=float)
        self.fast = np.zeros(shape) if fast is None else np.array(fast, dtype=float)
        self.last_update_time = float(last_update_time)

    @classmethod
    def zero(cls, model, t0: float = 0.0) -> "DecayState":
        thetas = (model,) if isinstance(model, ModelTheta) else tuple(model)
        return cls(thetas, last_update_time=t0)

    def decayed(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        dt = t - self.last_update_time
        if dt < 0:
            raise TimeRegression(f"cannot evaluate at {t} before last update {self.last_update_time}")
        return self.slow * np.exp(-self.alphas * dt), self.fast * np.exp(-self.betas * dt)

    def intensity(self, t: float, target: int = 0) -> float:
        """Reconstruct ``lambda`` of the ``target``-th theta at ``t``."""
        slow, fast = self.decayed(t)
        th = self.thetas[target]
        exc = np.sum(self.ks[target] * (slow[target] + self.signs[target] * fast[target]))
        return baseline_eval(th.baseline, t) + float(exc)


def advance_state(state: DecayState, new_event: MarkedEvent) -> DecayState:
    """Decay the accumulators to ``new_event.t`` and add the event's mark weight."""
    if new_event.t < state.last_update_time:
        raise TimeRegression(
            f"event at {new_event.t} precedes last update {state.last_update_time}")
    slow, fast = state.decayed(new_event.t)
    j = int(new_event.side) - 1
    w = np.exp(state.bs[:, j] * new_event.volume)
    slow[:, j] += w
    fast[:, j] += w
    return DecayState(state.thetas, slow, fast, new_event.t)
