"""Maximum-likelihood calibration of one side's parameters in one session.

The optimizer works on an unconstrained vector (see :class:`ParameterMap`):

    [log knot_1 .. log knot_K,
     log k_buy,  b_buy,  log alpha_buy,  log gap_buy,
     log k_sell, b_sell, log alpha_sell, log gap_sell]

with ``beta = alpha + floor + exp(gap)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import _fast
from .baseline import BaselineSpline, SessionWindow, baseline_integral
from .errors import InsufficientEvents, InvalidParameters
from .intensity import EventStream, ModelPair, ModelTheta, Side, as_stream
from .kernels import KernelForm, KernelParams
from .stationarity import StationarityReport, check_stationarity

log = logging.getLogger(__name__)

MIN_EVENTS = 50
METHODS = ("l-bfgs-b", "nelder-mead")


@dataclass(frozen=True)
class FitConfig:
    kernel_form: KernelForm = KernelForm.DIFFERENCE
    max_iterations: int = 2000
    tolerance: float = 1e-9
    parameter_floor: float = 1e-6
    restarts: int = 5
    seed: int = 0
    method: str = "l-bfgs-b"

    def __post_init__(self):
        object.__setattr__(self, "kernel_form", KernelForm.parse(self.kernel_form))
        if not self.tolerance > 0:
            raise InvalidParameters("tolerance must be > 0")
        if self.restarts < 1:
            raise InvalidParameters("restarts must be >= 1")
        if not self.parameter_floor > 0:
            raise InvalidParameters("parameter_floor must be > 0")
        if self.method not in METHODS:
            raise InvalidParameters(f"method must be one of {METHODS}")

    def to_dict(self) -> dict:
        return {"kernel_form": self.kernel_form.value, "max_iterations": self.max_iterations,
                "tolerance": self.tolerance, "parameter_floor": self.parameter_floor,
                "restarts": self.restarts, "seed": self.seed, "method": self.method}


@dataclass(frozen=True)
class FitResult:
    theta: ModelTheta
    log_likelihood: float
    converged: bool
    iterations: int
    gradient_norm: float
    restart_index: int
    n_events: int
    evaluations: int = 0
    simplex_size: Optional[float] = None
    stationary: Optional[bool] = None
    message: str = ""
    best_trace: tuple = field(default=(), repr=False, compare=False)

    def to_dict(self) -> dict:
        return {"theta": self.theta.to_dict(), "log_likelihood": self.log_likelihood,
                "converged": self.converged, "iterations": self.iterations,
                "gradient_norm": self.gradient_norm, "simplex_size": self.simplex_size,
                "restart_index": self.restart_index, "n_events": self.n_events,
                "evaluations": self.evaluations, "stationary": self.stationary,
                "message": self.message}

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(theta=ModelTheta.from_dict(d["theta"]), log_likelihood=d["log_likelihood"],
                   converged=d["converged"], iterations=d["iterations"],
                   gradient_norm=d["gradient_norm"], restart_index=d["restart_index"],
                   n_events=d["n_events"], evaluations=d.get("evaluations", 0),
                   simplex_size=d.get("simplex_size"), stationary=d.get("stationary"),
                   message=d.get("message", ""))


@dataclass(frozen=True)
class PairFit:
    buy: FitResult
    sell: FitResult
    stationarity: StationarityReport

    @property
    def model(self) -> ModelPair:
        return ModelPair(self.buy.theta, self.sell.theta)

    def result(self, side) -> FitResult:
        return self.buy if Side.parse(side) is Side.BUY else self.sell


# ---------------------------------------------------------------------------
# parameter map

class ParameterMap:
    """Bijection between the unconstrained optimizer space and ModelTheta."""

    def __init__(self, window: SessionWindow, side=Side.BUY,
                 form=KernelForm.DIFFERENCE, floor: float = 1e-6):
        self.window = window
        self.side = Side.parse(side)
        self.form = KernelForm.parse(form)
        self.floor = float(floor)
        self.n_knots = len(window.knot_times)

    @property
    def size(self) -> int:
        return self.n_knots + 8

    def _pos(self, x):
        return max(math.exp(min(x, 700.0)), self.floor)

    def natural(self, raw) -> np.ndarray:
        """Natural parameters ``[knots..., k, b, alpha, beta (buy), k, b, alpha, beta (sell)]``."""
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (self.size,):
            raise InvalidParameters(f"expected {self.size} raw values, got {raw.shape}")
        out = np.empty(self.size)
        nk = self.n_knots
        for i in range(nk):
            out[i] = self._pos(raw[i])
        for j in range(2):
            o = nk + 4 * j
            k, b, a, gap = raw[o: o + 4]
            alpha = self._pos(a)
            beta = alpha + self.floor + math.exp(min(gap, 700.0))
            if beta <= alpha:  # the gap vanished in rounding at huge alpha
                beta = math.nextafter(alpha, math.inf)
            out[o: o + 4] = (self._pos(k), b, alpha, beta)
        return out

    def chain(self, raw) -> np.ndarray:
        """Jacobian of :meth:`natural` as a dense matrix (rows: natural, cols: raw)."""
        raw = np.asarray(raw, dtype=float)
        nat = self.natural(raw)
        jac = np.zeros((self.size, self.size))
        nk = self.n_knots

        def dpos(x, value):
            return value if math.exp(min(x, 700.0)) > self.floor else 0.0

        for i in range(nk):
            jac[i, i] = dpos(raw[i], nat[i])
        for j in range(2):
            o = nk + 4 * j
            jac[o, o] = dpos(raw[o], nat[o])
            jac[o + 1, o + 1] = 1.0
            da = dpos(raw[o + 2], nat[o + 2])
            jac[o + 2, o + 2] = da
            jac[o + 3, o + 2] = da
            jac[o + 3, o + 3] = math.exp(min(raw[o + 3], 700.0))
        return jac

    def theta_from_natural(self, nat) -> ModelTheta:
        nk = self.n_knots
        kernels = []
        for j in range(2):
            k, b, a, be = (float(x) for x in nat[nk + 4 * j: nk + 4 * j + 4])
            kernels.append(KernelParams(k, b, a, be, self.form))
        return ModelTheta(self.side, tuple(kernels),
                          BaselineSpline(self.window, tuple(float(x) for x in nat[:nk])))

    def to_theta(self, raw) -> ModelTheta:
        return self.theta_from_natural(self.natural(raw))

    def to_raw(self, theta: ModelTheta) -> np.ndarray:
        raw = np.empty(self.size)
        nk = self.n_knots
        raw[:nk] = np.log(np.maximum(theta.baseline.ys, self.floor))
        for j, p in enumerate(theta.kernels):
            a, be = p.alpha, p.beta
            if be < a:  # only reachable for the sum form, which is symmetric in (alpha, beta)
                a, be = be, a
            o = nk + 4 * j
            raw[o: o + 4] = (math.log(max(p.k, self.floor)), p.b, math.log(max(a, self.floor)),
                             math.log(max(be - a - self.floor, 1e-300)))
        return raw


def transform_parameters(raw, window: SessionWindow = None, side=Side.BUY,
                         form=KernelForm.DIFFERENCE, floor: float = 1e-6) -> ModelTheta:
    """Map an unconstrained vector to a valid ModelTheta.

    ``window`` defaults to a zero-based copy of the morning session.
    """
    if window is None:
        from .baseline import MORNING
        window = SessionWindow.relative(MORNING.knot_offsets, name=MORNING.name)
    return ParameterMap(window, side, form, floor).to_theta(raw)


# ---------------------------------------------------------------------------
# likelihood

def _hat_integrals(spline: BaselineSpline, horizon: float) -> np.ndarray:
    n = len(spline.knot_values)
    out = np.empty(n)
    for i in range(n):
        unit = BaselineSpline(spline.window, tuple(1.0 if j == i else 0.0 for j in range(n)))
        out[i] = baseline_integral(unit, 0.0, horizon)
    return out


def _loglik(theta: ModelTheta, stream: EventStream, horizon: float, hat_int, want_grad):
    ks, bs, alphas, betas, sign = theta.channel_arrays()
    return _fast.loglik_target(stream.times, stream.sides, stream.volumes,
                               int(theta.target_side), float(horizon),
                               theta.baseline.xs, theta.baseline.ys, hat_int,
                               ks, bs, alphas, betas, sign, want_grad)


def log_likelihood(theta: ModelTheta, events_all, horizon: float) -> float:
    """Log-likelihood of ``theta.target_side`` events on ``[0, horizon]``.

    Both sides drive the intensity. Returns ``-inf`` if the intensity is not
    positive at some target event.
    """
    stream = as_stream(events_all)
    ll, _ = _loglik(theta, stream, horizon, _hat_integrals(theta.baseline, horizon), False)
    return float(ll)


def log_likelihood_grad(theta: ModelTheta, events_all, horizon: float):
    """Log-likelihood and its gradient in natural parameters (see :meth:`ParameterMap.natural`)."""
    stream = as_stream(events_all)
    ll, grad = _loglik(theta, stream, horizon, _hat_integrals(theta.baseline, horizon), True)
    return float(ll), grad.copy()


class _Objective:
    """Negative log-likelihood in raw space with a best-so-far trace."""

    def __init__(self, pmap: ParameterMap, stream: EventStream, horizon: float):
        self.pmap = pmap
        self.stream = stream
        self.horizon = horizon
        self.n_target = max(stream.count(pmap.side), 1)
        self.xs = pmap.window.knot_offsets
        unit = BaselineSpline(pmap.window, (0.0,) * pmap.n_knots)
        self.hat_int = _hat_integrals(unit, horizon)
        self.evaluations = 0
        self.best = -np.inf
        self.best_raw = None
        self.trace = []

    def _eval(self, raw, want_grad):
        nat = self.pmap.natural(raw)
        nk = self.pmap.n_knots
        ks = nat[nk + np.array([0, 4])]
        bs = nat[nk + np.array([1, 5])]
        alphas = nat[nk + np.array([2, 6])]
        betas = nat[nk + np.array([3, 7])]
        s = self.stream
        ll, grad = _fast.loglik_target(s.times, s.sides, s.volumes, int(self.pmap.side),
                                       self.horizon, self.xs, nat[:nk].copy(), self.hat_int,
                                       ks, bs, alphas, betas, self.pmap.form.sign, want_grad)
        self.evaluations += 1
        if ll > self.best:
            self.best = ll
            self.best_raw = np.array(raw, dtype=float)
        self.trace.append(self.best)
        return ll, grad, raw

    def value(self, raw):
        ll, _, _ = self._eval(raw, False)
        return -ll / self.n_target if np.isfinite(ll) else np.inf

    def value_and_grad(self, raw):
        ll, grad, raw = self._eval(raw, True)
        if not np.isfinite(ll):
            return 1e300, np.zeros_like(raw)
        g_raw = self.pmap.chain(raw).T @ grad
        return -ll / self.n_target, -g_raw / self.n_target


# ---------------------------------------------------------------------------
# fitting

INIT_ALPHA, INIT_BETA = 0.05, 0.5
INIT_CHANNEL_MASS = 0.25


def initial_raw(pmap: ParameterMap, stream: EventStream, horizon: float) -> np.ndarray:
    """Canonical start.

    ``b = 0``, ``(alpha, beta) = (0.05, 0.5)`` and ``k`` chosen so that each
    channel has mass 0.25 (branching ratio 0.5 per side); knots start at the
    matching exogenous share, half the empirical rate.
    """
    rate = max(stream.count(pmap.side) / horizon, pmap.floor * 10)
    shape = 1.0 / INIT_ALPHA + pmap.form.sign / INIT_BETA
    kern = KernelParams(INIT_CHANNEL_MASS / shape, 0.0, INIT_ALPHA, INIT_BETA, pmap.form)
    theta = ModelTheta(pmap.side, (kern, kern),
                       BaselineSpline(pmap.window, (0.5 * rate,) * pmap.n_knots))
    return pmap.to_raw(theta)


def _raw_bounds(pmap: ParameterMap, stream: EventStream):
    lo_log, hi_log = math.log(pmap.floor), math.log(1e4)
    vmax = float(stream.volumes.max()) if len(stream) else 1.0
    b_cap = 30.0 / max(vmax, 1.0)
    bounds = [(lo_log, hi_log)] * pmap.n_knots
    for _ in range(2):
        bounds += [(lo_log, hi_log), (-b_cap, b_cap), (lo_log, hi_log), (-30.0, hi_log)]
    return bounds


def _random_start(rng: np.random.Generator, pmap: ParameterMap, rate: float) -> np.ndarray:
    # time scales spread over three decades, channel masses in [0.1, 0.4]
    kernels = []
    total = 0.0
    for _ in range(2):
        alpha = INIT_ALPHA * 10.0 ** rng.uniform(-1.0, 2.0)
        beta = alpha * 10.0 ** rng.uniform(0.3, 1.3)
        mass = rng.uniform(0.1, 0.4)
        total += mass
        shape = 1.0 / alpha + pmap.form.sign / beta
        kernels.append(KernelParams(mass / shape, 0.0, alpha, beta, pmap.form))
    knots = (max(1.0 - total, 0.1) * rate,) * pmap.n_knots
    return pmap.to_raw(ModelTheta(pmap.side, tuple(kernels), BaselineSpline(pmap.window, knots)))


def _start_points(raw0, config: FitConfig, pmap: ParameterMap, bounds, rate: float):
    lo, hi = [b[0] for b in bounds], [b[1] for b in bounds]
    starts = [raw0]
    for r in range(1, config.restarts):
        rng = np.random.default_rng([config.seed, r])
        starts.append(np.clip(_random_start(rng, pmap, rate), lo, hi))
    return starts


def _run_one(obj: _Objective, x0, config: FitConfig, bounds):
    if config.method == "l-bfgs-b":
        res = minimize(obj.value_and_grad, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": config.max_iterations, "ftol": config.tolerance,
                                "gtol": 1e-7, "maxcor": 20})
        gnorm = float(np.linalg.norm(res.jac)) if res.jac is not None else float("nan")
        return res.x, bool(res.success), int(res.nit), gnorm, None, str(res.message)
    f0 = obj.value(x0)
    res = minimize(obj.value, x0, method="Nelder-Mead",
                   options={"maxiter": config.max_iterations,
                            "maxfev": 20 * config.max_iterations,
                            "xatol": 1e-6,
                            "fatol": config.tolerance * max(abs(f0), 1.0),
                            "adaptive": True})
    simplex = res.final_simplex[0]
    size = float(np.max(np.linalg.norm(simplex - simplex[0], axis=1)))
    return res.x, bool(res.success), int(res.nit), float("nan"), size, str(res.message)


def fit(events_all, side, session: SessionWindow, config: FitConfig = FitConfig(),
        horizon: float | None = None) -> FitResult:
    """Fit ``theta`` for ``side`` from events of both sides within one session.

    Event times are seconds since ``session.open``. Non-convergence is
    reported through ``converged`` rather than raised.
    """
    stream = as_stream(events_all)
    side = Side.parse(side)
    horizon = session.length if horizon is None else float(horizon)
    n_target = stream.count(side)
    if n_target < MIN_EVENTS:
        raise InsufficientEvents(f"{n_target} {side.label} events; need at least {MIN_EVENTS}")
    window = SessionWindow.relative(session.knot_offsets, name=session.name) \
        if session.open != 0 else session
    pmap = ParameterMap(window, side, config.kernel_form, config.parameter_floor)
    bounds = _raw_bounds(pmap, stream)
    raw0 = np.clip(initial_raw(pmap, stream, horizon),
                   [b[0] for b in bounds], [b[1] for b in bounds])

    best = None
    rate = max(n_target / horizon, pmap.floor * 10)
    for r, x0 in enumerate(_start_points(raw0, config, pmap, bounds, rate)):
        obj = _Objective(pmap, stream, horizon)
        x, ok, nit, gnorm, size, msg = _run_one(obj, x0, config, bounds)
        # the optimizer may report a final iterate that is not the best point it evaluated
        if obj.best_raw is not None and obj.value(obj.best_raw) <= obj.value(x):
            x = obj.best_raw
        ll = log_likelihood(pmap.to_theta(x), stream, horizon)
        log.debug("restart %d: ll=%.6f converged=%s nit=%d", r, ll, ok, nit)
        if best is None or ll > best[1]:
            best = (x, ll, ok, nit, gnorm, size, msg, r, obj)
    x, ll, ok, nit, gnorm, size, msg, r, obj = best
    if not np.isfinite(ll):
        ok = False
        msg = "no finite log-likelihood found"
    # trace from the winning restart, thinned to keep the result small
    trace = tuple(obj.trace[:: max(1, len(obj.trace) // 500)])
    # write the window back with wall-clock times
    theta = pmap.to_theta(x)
    theta = ModelTheta(theta.target_side, theta.kernels,
                       BaselineSpline(session, theta.baseline.knot_values))
    return FitResult(theta=theta, log_likelihood=float(ll), converged=ok, iterations=nit,
                     gradient_norm=gnorm, restart_index=r, n_events=n_target,
                     evaluations=obj.evaluations, simplex_size=size, message=msg,
                     best_trace=trace)


def median_marks(events) -> tuple[float, float]:
    """Per-side median volume (lots); falls back to the other side or 0."""
    stream = as_stream(events)
    meds = []
    for side in Side:
        v = stream.side_volumes(side)
        meds.append(float(np.median(v)) if len(v) else float("nan"))
    fallback = next((m for m in meds if np.isfinite(m)), 0.0)
    return tuple(m if np.isfinite(m) else fallback for m in meds)


def fit_pair(events_all, session: SessionWindow, config: FitConfig = FitConfig(),
             reference_marks=None, horizon: float | None = None) -> PairFit:
    """Fit both sides independently and certify the resulting pair.

    Each returned FitResult carries the pair's stationarity verdict.
    """
    stream = as_stream(events_all)
    marks = median_marks(stream) if reference_marks is None else tuple(reference_marks)
    buy = fit(stream, Side.BUY, session, replace(config, seed=_side_seed(config.seed, Side.BUY)),
              horizon)
    sell = fit(stream, Side.SELL, session, replace(config, seed=_side_seed(config.seed, Side.SELL)),
               horizon)
    report = check_stationarity((buy.theta, sell.theta), marks)
    if not report.stationary:
        log.warning("fitted model is not stationary (spectral radius %.4f)", report.spectral_radius)
    return PairFit(replace(buy, stationary=report.stationary),
                   replace(sell, stationary=report.stationary), report)


def _side_seed(seed: int, side: Side) -> int:
    return int(np.random.SeedSequence([seed, int(side)]).generate_state(1)[0])
