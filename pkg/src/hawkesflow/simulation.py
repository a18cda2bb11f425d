"""Ogata thinning for the bivariate marked process.

Randomness comes from one ``numpy.random.Generator`` seeded by the config and
is fed to the compiled loop in fixed-size chunks, so a stream is a pure
function of the config.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .errors import CapExceeded, InvalidParameters, NonStationaryModel
from .intensity import EventStream, ModelPair
from .stationarity import check_stationarity

_CHUNK = 4096

# loop exit codes
_DONE, _NEED_UNIFORMS, _NEED_BUY_MARKS, _NEED_SELL_MARKS, _CAP = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class MarkDistribution:
    """Volume mark law for one side, in lots. Marks are i.i.d. and history-free."""

    kind: str = "constant"
    value: float = 30.0
    mu: float = 0.0
    sigma: float = 1.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "lognormal", "empirical"):
            raise InvalidParameters(f"unknown mark distribution {self.kind!r}")
        if self.kind == "constant" and self.value < 0:
            raise InvalidParameters("constant mark must be >= 0")
        if self.kind == "lognormal" and self.sigma < 0:
            raise InvalidParameters("lognormal sigma must be >= 0")
        if self.kind == "empirical":
            vals = tuple(float(v) for v in self.values)
            if not vals or min(vals) < 0:
                raise InvalidParameters("empirical marks must be a non-empty list of values >= 0")
            object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, lots: float) -> "MarkDistribution":
        return cls("constant", value=float(lots))

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> "MarkDistribution":
        return cls("lognormal", mu=float(mu), sigma=float(sigma))

    @classmethod
    def empirical(cls, lots) -> "MarkDistribution":
        return cls("empirical", values=tuple(lots))

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n, self.value)
        if self.kind == "lognormal":
            return rng.lognormal(self.mu, self.sigma, size=n)
        return rng.choice(np.asarray(self.values), size=n)

    def median(self) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "lognormal":
            return math.exp(self.mu)
        return float(np.median(self.values))

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "lognormal":
            return {"kind": "lognormal", "mu": self.mu, "sigma": self.sigma}
        return {"kind": "empirical", "values": list(self.values)}

    @classmethod
    def from_dict(cls, d: dict) -> "MarkDistribution":
        kind = d.get("kind", "constant")
        if kind == "constant":
            return cls.constant(d["value"])
        if kind == "lognormal":
            return cls.lognormal(d["mu"], d["sigma"])
        return cls.empirical(d["values"])


@dataclass(frozen=True)
class SimConfig:
    model: ModelPair
    marks: tuple = (MarkDistribution.constant(30.0), MarkDistribution.constant(32.0))
    horizon: Optional[float] = None
    seed: int = 0
    max_events: int = 1_000_000
    allow_nonstationary: bool = False
    debug: bool = False

    def __post_init__(self):
        object.__setattr__(self, "model", ModelPair(*self.model))
        if len(self.marks) != 2:
            raise InvalidParameters("need one mark distribution per side")
        length = self.model.buy.baseline.window.length
        if self.model.sell.baseline.window.knot_offsets.tolist() != \
                self.model.buy.baseline.window.knot_offsets.tolist():
            raise InvalidParameters("buy and sell baselines must share the knot schedule")
        horizon = length if self.horizon is None else float(self.horizon)
        if not 0 < horizon <= length + 1e-9:
            raise InvalidParameters(f"horizon must lie in (0, {length}]")
        object.__setattr__(self, "horizon", horizon)

    @property
    def reference_marks(self) -> tuple:
        return tuple(m.median() for m in self.marks)


@njit(cache=True)
def _thin(t, horizon, slow, fast, xs, ys, ks, bs, alphas, betas, sign,
          u, u_pos, marks_buy, mb_pos, marks_sell, ms_pos,
          out_t, out_s, out_v, n_out, cap, debug):
    """Advance the thinning loop until it needs input or reaches the horizon.

    ``slow``/``fast``/``ks``/... are (target, source) 2x2 arrays, ``ys`` is
    (target, knot). Returns the updated scalar cursors and an exit code.
    """
    nk = xs.shape[0]
    violations = 0
    while True:
        if t >= horizon:
            return t, u_pos, mb_pos, ms_pos, n_out, _DONE, violations
        if u_pos + 2 > u.shape[0]:
            return t, u_pos, mb_pos, ms_pos, n_out, _NEED_UNIFORMS, violations
        if mb_pos >= marks_buy.shape[0]:
            return t, u_pos, mb_pos, ms_pos, n_out, _NEED_BUY_MARKS, violations
        if ms_pos >= marks_sell.shape[0]:
            return t, u_pos, mb_pos, ms_pos, n_out, _NEED_SELL_MARKS, violations
        if n_out >= cap:
            return t, u_pos, mb_pos, ms_pos, n_out, _CAP, violations
        # baseline segment holding t, and its end
        seg = 0
        while seg < nk - 2 and t >= xs[seg + 1]:
            seg += 1
        seg_end = min(xs[seg + 1], horizon)
        mu_bar = 0.0
        for i in range(2):
            y0 = ys[i, seg] + (ys[i, seg + 1] - ys[i, seg]) * (t - xs[seg]) / (xs[seg + 1] - xs[seg])
            mu_bar += max(y0, ys[i, seg + 1])
        exc_bar = 0.0
        for i in range(2):
            for j in range(2):
                exc_bar += ks[i, j] * slow[i, j]
                if sign > 0:
                    exc_bar += ks[i, j] * fast[i, j]
        lam_bar = mu_bar + exc_bar
        u1 = u[u_pos]
        u2 = u[u_pos + 1]
        u_pos += 2
        if lam_bar <= 0.0:
            cand = np.inf
        else:
            cand = t - np.log(1.0 - u1) / lam_bar
        if cand >= seg_end:
            dt = seg_end - t
            for i in range(2):
                for j in range(2):
                    slow[i, j] *= np.exp(-alphas[i, j] * dt)
                    fast[i, j] *= np.exp(-betas[i, j] * dt)
            t = seg_end
            continue
        dt = cand - t
        for i in range(2):
            for j in range(2):
                slow[i, j] *= np.exp(-alphas[i, j] * dt)
                fast[i, j] *= np.exp(-betas[i, j] * dt)
        t = cand
        lam = np.zeros(2)
        for i in range(2):
            lam[i] = ys[i, seg] + (ys[i, seg + 1] - ys[i, seg]) * (t - xs[seg]) / (xs[seg + 1] - xs[seg])
            for j in range(2):
                lam[i] += ks[i, j] * (slow[i, j] + sign * fast[i, j])
        total = lam[0] + lam[1]
        if debug and total > lam_bar * (1.0 + 1e-12):
            violations += 1
        level = u2 * lam_bar
        if level >= total:
            continue
        if level < lam[0]:
            src = 0
            v = marks_buy[mb_pos]
            mb_pos += 1
        else:
            src = 1
            v = marks_sell[ms_pos]
            ms_pos += 1
        out_t[n_out] = t
        out_s[n_out] = src + 1
        out_v[n_out] = v
        n_out += 1
        for i in range(2):
            w = np.exp(bs[i, src] * v)
            slow[i, src] += w
            fast[i, src] += w


def _model_arrays(model: ModelPair):
    ks = np.array([[p.k for p in th.kernels] for th in model])
    bs = np.array([[p.b for p in th.kernels] for th in model])
    alphas = np.array([[p.alpha for p in th.kernels] for th in model])
    betas = np.array([[p.beta for p in th.kernels] for th in model])
    ys = np.array([th.baseline.ys for th in model])
    return ks, bs, alphas, betas, ys


def simulate(config: SimConfig) -> EventStream:
    """Simulate one session of buy/sell events with volume marks.

    Times are seconds since session open in ``[0, horizon)``.
    """
    model = config.model
    report = check_stationarity(model, config.reference_marks)
    if not report.stationary and not config.allow_nonstationary:
        raise NonStationaryModel(report.spectral_radius)
    ks, bs, alphas, betas, ys = _model_arrays(model)
    xs = model.buy.baseline.xs.astype(float)
    sign = model.form.sign
    rng = np.random.default_rng(config.seed)
    buy_law, sell_law = config.marks

    cap = int(config.max_events)
    out_t = np.empty(min(cap, 1 << 16))
    out_s = np.empty(len(out_t), dtype=np.int64)
    out_v = np.empty(len(out_t))
    slow = np.zeros((2, 2))
    fast = np.zeros((2, 2))
    u = rng.random(_CHUNK)
    marks_buy = buy_law.draw(rng, _CHUNK)
    marks_sell = sell_law.draw(rng, _CHUNK)
    t, u_pos, mb_pos, ms_pos, n_out = 0.0, 0, 0, 0, 0
    violations = 0
    while True:
        t, u_pos, mb_pos, ms_pos, n_out, code, bad = _thin(
            t, config.horizon, slow, fast, xs, ys, ks, bs, alphas, betas, sign,
            u, u_pos, marks_buy, mb_pos, marks_sell, ms_pos,
            out_t, out_s, out_v, n_out, min(cap, len(out_t)), config.debug)
        violations += bad
        if code == _DONE:
            break
        if code == _NEED_UNIFORMS:
            u = np.concatenate([u[u_pos:], rng.random(_CHUNK)])
            u_pos = 0
        elif code == _NEED_BUY_MARKS:
            marks_buy = buy_law.draw(rng, _CHUNK)
            mb_pos = 0
        elif code == _NEED_SELL_MARKS:
            marks_sell = sell_law.draw(rng, _CHUNK)
            ms_pos = 0
        elif code == _CAP:
            if len(out_t) >= cap:
                raise CapExceeded(cap, report.spectral_radius)
            grow = min(cap, 2 * len(out_t))
            out_t = np.concatenate([out_t, np.empty(grow - len(out_t))])
            out_s = np.concatenate([out_s, np.empty(grow - len(out_s), dtype=np.int64)])
            out_v = np.concatenate([out_v, np.empty(grow - len(out_v))])
    if violations:
        raise AssertionError(f"thinning envelope fell below the intensity {violations} times")
    return EventStream(out_t[:n_out].copy(), out_s[:n_out].copy(), out_v[:n_out].copy(), check=False)
