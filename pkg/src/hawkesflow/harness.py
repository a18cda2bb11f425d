"""Campaign orchestration shared by the CLI and the acceptance suite.

Everything here is deterministic given the root seed: per-task seeds are
derived from ``SeedSequence([root, day, session, purpose])``.
"""
from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import SessionWindow, format_hms
from .calibration import FitConfig, ParameterMap, PairFit, fit_pair
from .diagnostics import ks_test, qq_points, residuals
from .errors import HawkesFlowError
from .ingestion import SessionEvents, to_feed_resolution
from .intensity import EventStream, ModelPair, Side
from .kernels import KernelForm, kernel_eval
from .simulation import SimConfig, simulate
from .stationarity import check_stationarity

SCHEMA_VERSION = 1
FIRST_DAY = _dt.date(2020, 1, 6)

# purposes mixed into derived seeds
_SIMULATE, _FIT, _TRIAL = 1, 2, 3


def derive_seed(root: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(root), *map(int, keys)]).generate_state(1)[0])


def trading_date(day_index: int) -> str:
    """Synthetic calendar: consecutive weekdays from a fixed Monday."""
    d, left = FIRST_DAY, day_index
    while left:
        d += _dt.timedelta(days=1)
        if d.weekday() < 5:
            left -= 1
    return d.isoformat()


# ---------------------------------------------------------------------------
# serialization

def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, np.floating):
        return _clean(float(obj))
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_clean(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(x) for x in obj]
    return obj


def dumps(kind: str, payload: dict) -> str:
    doc = {"schema": kind, "schema_version": SCHEMA_VERSION, "generator": f"hawkesflow {__version__}",
           **_clean(payload)}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_json(path: Path, kind: str, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(kind, payload), encoding="utf-8")


def read_json(path: Path, kind: str) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != kind:
        raise HawkesFlowError(f"{path}: expected a {kind!r} document, found {doc.get('schema')!r}")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise HawkesFlowError(f"{path}: unsupported schema version {doc.get('schema_version')}")
    return doc


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"# schema_version={SCHEMA_VERSION}"])
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# schema_version="):
            raise HawkesFlowError(f"{path}: missing schema header")
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# simulation campaigns

def simulate_session(model: ModelPair, marks, seed: int, max_events: int = 1_000_000,
                     allow_nonstationary: bool = False, feed_resolution: bool = True) -> EventStream:
    events = simulate(SimConfig(model, tuple(marks), seed=seed, max_events=max_events,
                                allow_nonstationary=allow_nonstationary))
    return to_feed_resolution(events) if feed_resolution else events


def simulate_campaign(spec, sessions, days: int, root_seed: int,
                      allow_nonstationary: bool = False) -> dict:
    """``{(date, session name): SessionEvents}`` for ``days`` synthetic days."""
    out = {}
    for d in range(days):
        date = trading_date(d)
        for s, window in enumerate(sessions):
            ev = simulate_session(spec.model.pair(window), spec.marks,
                                  derive_seed(root_seed, d, s, _SIMULATE), spec.max_events,
                                  allow_nonstationary)
            out[(date, window.name)] = SessionEvents(date, window, ev)
    return out


# ---------------------------------------------------------------------------
# fitting

@dataclass
class SessionOutcome:
    date: str
    window: SessionWindow
    pair: PairFit | None
    ks: dict  # Side -> KsReport
    taus: dict  # Side -> np.ndarray
    error: str | None = None

    @property
    def key(self) -> str:
        return f"{self.date}_{self.window.name}"


def fit_session(date: str, window: SessionWindow, events: EventStream,
                fit_cfg: FitConfig) -> SessionOutcome:
    try:
        pair = fit_pair(events, window, fit_cfg)
        ks, taus = {}, {}
        for side in Side:
            series = residuals(pair.model.theta(side), events, side)
            taus[side] = np.asarray(series.taus)
            ks[side] = ks_test(series)
        return SessionOutcome(date, window, pair, ks, taus)
    except HawkesFlowError as exc:
        return SessionOutcome(date, window, None, {}, {}, f"{type(exc).__name__}: {exc}")


def _fit_task(args):
    return fit_session(*args)


def fit_sessions(sessions: dict, cfg, jobs: int = 1) -> list[SessionOutcome]:
    keys = sorted(sessions)
    day_index = {d: i for i, d in enumerate(sorted({d for d, _ in keys}))}
    session_index = {w.name: i for i, w in enumerate(cfg.sessions)}
    tasks = []
    for key in keys:
        sess = sessions[key]
        seed = derive_seed(cfg.seed, day_index[sess.date], session_index.get(sess.window.name, 99), _FIT)
        tasks.append((sess.date, sess.window, sess.events, cfg.fit_config(seed)))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_fit_task, tasks))
    return [_fit_task(t) for t in tasks]


def write_fit_artifacts(outcomes: list[SessionOutcome], cfg, out: Path) -> dict:
    """Per-task files plus the aggregate tables. Returns the manifest payload."""
    ks_rows, radius_rows, failures = [], [], []
    for oc in outcomes:
        if oc.pair is None:
            failures.append({"session": oc.key, "error": oc.error})
            continue
        write_json(out / "stationarity" / f"{oc.key}.json", "stationarity",
                   {"date": oc.date, "session": oc.window.name, **oc.pair.stationarity.to_dict()})
        radius_rows.append((oc.date, oc.window.name, oc.pair.stationarity.spectral_radius,
                            oc.pair.stationarity.stationary))
        for side in Side:
            stem = f"{oc.key}_{side.label}"
            write_json(out / "fits" / f"{stem}.json", "fit",
                       {"date": oc.date, "session": oc.window.name, "side": side.label,
                        "result": oc.pair.result(side).to_dict()})
            write_csv(out / "residuals" / f"{stem}.csv", ["index", "tau"],
                      [(i, float(t)) for i, t in enumerate(oc.taus[side])])
            write_csv(out / "qq" / f"{stem}.csv", ["theoretical", "empirical"],
                      [tuple(map(float, r)) for r in qq_points(oc.taus[side])])
            ks = oc.ks[side]
            write_json(out / "ks" / f"{stem}.json", "ks",
                       {"date": oc.date, "session": oc.window.name, "side": side.label,
                        **ks.to_dict()})
            ks_rows.append((oc.date, oc.window.name, side.label, ks.n, ks.statistic,
                            ks.p_value, ks.pass_at_5pct))
    agg = out / "aggregate"
    write_csv(agg / "ks_pvalues.csv",
              ["date", "session", "side", "n", "statistic", "p_value", "pass_at_5pct"], ks_rows)
    write_csv(agg / "spectral_radius.csv", ["date", "session", "spectral_radius", "stationary"],
              radius_rows)
    fitted = [oc for oc in outcomes if oc.pair is not None]
    write_csv(agg / "baseline_bands.csv",
              ["session", "side", "knot_time", "mean", "sd", "lower", "upper", "n_fits"],
              baseline_bands(fitted))
    write_csv(agg / "kernel_curves.csv",
              ["target", "source", "lag", "mean", "sd", "lower", "upper", "n_fits"],
              kernel_curves(fitted, cfg.report))
    return {"sessions": [oc.key for oc in outcomes], "failures": failures,
            "n_fits": 2 * len(fitted),
            "all_stationary": all(r[3] for r in radius_rows) if radius_rows else None}


def _band(values):
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    sd = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    return mean, sd, mean - 2 * sd, mean + 2 * sd, len(v)


def baseline_bands(outcomes) -> list:
    rows = []
    names = sorted({oc.window.name for oc in outcomes})
    for name in names:
        group = [oc for oc in outcomes if oc.window.name == name]
        window = group[0].window
        for side in Side:
            vals = np.array([oc.pair.model.theta(side).baseline.ys for oc in group])
            for i, knot in enumerate(window.knot_times):
                rows.append((name, side.label, format_hms(knot), *_band(vals[:, i])))
    return rows


def kernel_curves(outcomes, report) -> list:
    lags = np.linspace(0.0, report.curve_max_lag, report.curve_points)
    rows = []
    for target in Side:
        for source in Side:
            curves = np.array([kernel_eval(oc.pair.model.theta(target).kernel(source), lags,
                                           report.kernel_volume) for oc in outcomes])
            for i, lag in enumerate(lags):
                rows.append((target.label, source.label, float(lag), *_band(curves[:, i])))
    return rows


# ---------------------------------------------------------------------------
# recovery

def parameter_names(window: SessionWindow, side) -> list[str]:
    side = Side.parse(side)
    names = [f"{side.label}.mu[{i}]" for i in range(len(window.knot_times))]
    for src in Side:
        names += [f"{side.label}.{p}[{src.label}]" for p in ("k", "b", "alpha", "beta")]
    return names


def natural_vector(theta, form=None) -> np.ndarray:
    window = theta.baseline.window
    pmap = ParameterMap(window, theta.target_side, form or theta.form)
    return pmap.natural(pmap.to_raw(theta))


@dataclass
class TrialResult:
    seed: int
    n_events: int
    names: list
    truth: np.ndarray
    estimate: np.ndarray
    ks_truth: dict
    ks_fit: dict
    ks_cross: dict | None
    radius_fit: float

    @property
    def rel_error(self) -> np.ndarray:
        return np.abs(self.estimate / self.truth - 1.0)


def recovery_trial(truth: ModelPair, marks, fit_cfg: FitConfig, seed: int,
                   cross_form: KernelForm | None = None, max_events: int = 1_000_000,
                   reference_marks=None) -> TrialResult:
    """Simulate one session from ``truth``, refit it, and score the fit.

    Continuous-time events are used (no feed rounding) so the truth's
    residuals are exactly unit exponential.
    """
    window = truth.buy.baseline.window
    events = simulate_session(truth, marks, seed, max_events, feed_resolution=False)
    if reference_marks is None:
        reference_marks = tuple(m.median() for m in marks)
    pair = fit_pair(events, window, fit_cfg, reference_marks=reference_marks)
    names, tv, ev = [], [], []
    ks_truth, ks_fit, ks_cross = {}, {}, None
    for side in Side:
        names += parameter_names(window, side)
        tv.append(natural_vector(truth.theta(side)))
        ev.append(natural_vector(pair.model.theta(side)))
        ks_truth[side] = ks_test(residuals(truth.theta(side), events, side))
        ks_fit[side] = ks_test(residuals(pair.model.theta(side), events, side))
    if cross_form is not None:
        other = fit_pair(events, window, replace(fit_cfg, kernel_form=cross_form),
                         reference_marks=reference_marks)
        ks_cross = {side: ks_test(residuals(other.model.theta(side), events, side)) for side in Side}
    return TrialResult(seed, len(events), names, np.concatenate(tv), np.concatenate(ev),
                       ks_truth, ks_fit, ks_cross, pair.stationarity.spectral_radius)


def summarize_recovery(trials: list[TrialResult], tolerance: float = 0.25) -> dict:
    errs = np.array([t.rel_error for t in trials])
    within = errs < tolerance
    p_truth = [t.ks_truth[s].p_value for t in trials for s in Side]
    p_fit = [t.ks_fit[s].p_value for t in trials for s in Side]
    out = {
        "trials": len(trials),
        "tolerance": tolerance,
        "per_parameter_within_rate": dict(zip(trials[0].names, within.mean(0).tolist())),
        "min_per_parameter_within_rate": float(within.mean(0).min()),
        "joint_within_rate": float(within.all(1).mean()),
        "ks_pass_rate_truth": float(np.mean(np.array(p_truth) >= 0.05)),
        "ks_pass_rate_fit": float(np.mean(np.array(p_fit) >= 0.05)),
        "median_p_fit": float(np.median(p_fit)),
        "fitted_spectral_radius": [t.radius_fit for t in trials],
    }
    if trials[0].ks_cross is not None:
        p_cross = [t.ks_cross[s].p_value for t in trials for s in Side]
        out["median_p_cross_form"] = float(np.median(p_cross))
        out["ks_pass_rate_cross_form"] = float(np.mean(np.array(p_cross) >= 0.05))
    return out


def recovery_rows(trials: list[TrialResult]) -> list:
    rows = []
    for t in trials:
        for name, tv, ev, err in zip(t.names, t.truth, t.estimate, t.rel_error):
            rows.append((t.seed, name, float(tv), float(ev), float(err)))
    return rows


def run_recovery(cfg, jobs: int = 1) -> tuple[list[TrialResult], dict]:
    spec = cfg.simulation
    window = cfg.sessions[0]
    truth = spec.model.pair(window)
    report = check_stationarity(truth, tuple(m.median() for m in spec.marks))
    cross = KernelForm.SUM if cfg.kernel is KernelForm.DIFFERENCE else KernelForm.DIFFERENCE
    tasks = [(truth, spec.marks, cfg.fit_config(derive_seed(cfg.seed, i, 0, _FIT)),
              derive_seed(cfg.seed, i, 0, _TRIAL), cross, spec.max_events)
             for i in range(spec.trials)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trials = list(pool.map(_trial_task, tasks))
    else:
        trials = [_trial_task(t) for t in tasks]
    summary = summarize_recovery(trials)
    summary["truth_spectral_radius"] = report.spectral_radius
    summary["session"] = window.name
    return trials, summary


def _trial_task(args):
    truth, marks, fit_cfg, seed, cross, max_events = args
    if cross is not None and fit_cfg.kernel_form is cross:
        cross = None
    return recovery_trial(truth, marks, fit_cfg, seed, cross, max_events)
