"""End-to-end acceptance checks, one test per criterion.

Each test records ``(passed, detail)`` in ``conftest.ACCEPTANCE`` before
asserting, so the terminal summary prints a line per criterion.
"""
import copy
import math

import numpy as np
import pytest
import yaml

from hawkesflow import harness
from hawkesflow.baseline import MORNING, SessionWindow
from hawkesflow.calibration import FitConfig, fit_pair, log_likelihood
from hawkesflow.cli import EXIT_OK, main
from hawkesflow.config import config_from_dict
from hawkesflow.diagnostics import ks_test, residuals
from hawkesflow.intensity import Side, scan
from hawkesflow.kernels import KernelForm, KernelParams, kernel_eval
from hawkesflow.simulation import MarkDistribution
from hawkesflow.stationarity import check_stationarity, spectral_radius

from conftest import ACCEPTANCE, random_stream, random_theta, symmetric_truth
from test_calibration import quadrature_log_likelihood
from test_ingestion import HEADER, OPEN_CS, table1_records
from test_intensity import brute_intensity
from test_stationarity import power_iteration

pytestmark = pytest.mark.acceptance

WINDOW = SessionWindow.relative(MORNING.knot_offsets)
MARKS = (MarkDistribution.lognormal(math.log(30), 0.5),) * 2


def record(num, ok, detail):
    ACCEPTANCE[num] = (bool(ok), detail)
    assert ok, detail


def test_criterion_01_kernel_decay_fixture():
    a, b, u = 0.0089, 0.1733, 20.0
    diff = kernel_eval(KernelParams(1.0, 0.0, a, b), u)
    both = kernel_eval(KernelParams(1.0, 0.0, a, b, KernelForm.SUM), u)
    slow, fast = (both + diff) / 2, (both - diff) / 2
    record(1, round(slow, 4) == 0.8369 and round(fast, 4) == 0.0312,
           f"slow {slow:.4f} (0.8369), fast {fast:.4f} (0.0312)")


def test_criterion_02_recursion_matches_brute_force():
    rng = np.random.default_rng(2)
    worst = 0.0
    for i in range(50):
        form = KernelForm.DIFFERENCE if i % 2 else KernelForm.SUM
        th = random_theta(rng, int(rng.integers(1, 3)), form)
        ev = random_stream(rng, int(rng.integers(2, 501)))
        lam, _ = scan(th, ev)
        brute = np.array([brute_intensity(th, ev, t) for t in ev.times])
        worst = max(worst, float(np.max(np.abs(lam - brute))))
    record(2, worst < 1e-9, f"max |recursive - brute| over 50 instances = {worst:.2e} (< 1e-9)")


def test_criterion_03_likelihood_matches_quadrature():
    rng = np.random.default_rng(3)
    worst = 0.0
    for i in range(20):
        form = KernelForm.DIFFERENCE if i % 2 else KernelForm.SUM
        th = random_theta(rng, int(rng.integers(1, 3)), form, length=60.0)
        ev = random_stream(rng, 30, length=60.0)
        horizon = float(rng.uniform(40, 60))
        ll, ref = log_likelihood(th, ev, horizon), quadrature_log_likelihood(th, ev, horizon)
        worst = max(worst, abs(ll - ref) / abs(ref))
    record(3, worst < 1e-6, f"max relative error over 20 instances = {worst:.2e} (< 1e-6)")


def test_criterion_04_simulate_then_fit_recovery():
    truth = symmetric_truth(WINDOW, (0.8, 0.5, 0.5, 0.8), 0.30, 0.35, (10.0, 40.0), (5.0, 50.0), b=0.02)
    radius = check_stationarity(truth, (30.0, 30.0)).spectral_radius
    trials = [harness.recovery_trial(truth, MARKS, FitConfig(restarts=5, seed=s), 400 + s) for s in range(20)]
    summary = harness.summarize_recovery(trials, tolerance=0.25)
    fewest = min(t.n_events for t in trials)
    worst = min(summary["per_parameter_within_rate"], key=summary["per_parameter_within_rate"].get)
    ok = (0.5 <= radius <= 0.7 and fewest >= 4000 and summary["min_per_parameter_within_rate"] >= 0.8)
    record(4, ok, f"truth radius {radius:.3f}, fewest events {fewest}; every parameter within 25% in "
                  f">= {summary['min_per_parameter_within_rate']:.2f} of 20 trials (worst {worst}); "
                  f"all 24 jointly in {summary['joint_within_rate']:.2f}")


def test_criterion_05_residuals_under_truth():
    truth = symmetric_truth(WINDOW, (0.9, 0.3, 0.3, 0.8), 0.25, 0.20, (1.0, 10.0), (0.5, 5.0), b=0.01)
    passes = {side: 0 for side in Side}
    smallest = math.inf
    for s in range(100):
        ev = harness.simulate_session(truth, MARKS, 500 + s, feed_resolution=False)
        for side in Side:
            rep = ks_test(residuals(truth.theta(side), ev, side))
            smallest = min(smallest, rep.n)
            passes[side] += rep.pass_at_5pct
    rates = {side.label: passes[side] / 100 for side in Side}
    ok = smallest >= 1000 and min(rates.values()) >= 0.9
    record(5, ok, f"KS pass rate at 5% over 100 trials {rates}, smallest n {smallest}")


def test_criterion_06_kernel_form_contrast():
    truth = symmetric_truth(WINDOW, (0.6, 0.4, 0.4, 0.6), 0.30, 0.30, (0.5, 10.0), (0.25, 5.0), b=0.01)
    assert all(p.beta / p.alpha >= 10 for th in truth for p in th.kernels)
    trials = [harness.recovery_trial(truth, MARKS, FitConfig(restarts=2, seed=s), 600 + s,
                                     cross_form=KernelForm.SUM) for s in range(20)]
    summary = harness.summarize_recovery(trials)
    p_diff, p_sum = summary["median_p_fit"], summary["median_p_cross_form"]
    record(6, p_sum < p_diff, f"median KS p over 20 paired trials: difference {p_diff:.3f}, sum {p_sum:.3f}")


def test_criterion_07_stationarity_campaign():
    light = {"knots": [0.4, 0.2, 0.2, 0.4],
             "kernels": {"buy": {"k": 0.05, "b": 0.01, "alpha": 0.5, "beta": 2.0},
                         "sell": {"k": 0.03, "b": 0.01, "alpha": 0.3, "beta": 1.5}}}
    mirror = {"knots": light["knots"], "kernels": {"buy": light["kernels"]["sell"],
                                                   "sell": light["kernels"]["buy"]}}
    cfg = config_from_dict({"seed": 7, "fit": {"restarts": 1}, "simulation": {
        "days": 21, "marks": {"buy": {"kind": "lognormal", "mu": math.log(30), "sigma": 0.5},
                              "sell": {"kind": "lognormal", "mu": math.log(32), "sigma": 0.5}},
        "model": {"form": "difference", "buy": light, "sell": mirror}}})
    truth_radius = max(check_stationarity(cfg.simulation.model.pair(w), (30.0, 32.0)).spectral_radius
                       for w in cfg.sessions)
    sessions = harness.simulate_campaign(cfg.simulation, cfg.sessions, 21, cfg.seed)
    outcomes = harness.fit_sessions(sessions, cfg)
    reports = [o.pair.stationarity for o in outcomes if o.pair is not None]
    q = np.array([r.q.entries for r in reports])
    consistent = all(r.stationary == (r.spectral_radius < 1) and r.spectral_radius == spectral_radius(r.q)
                     for r in reports)
    fit_gap = float(np.max(np.abs(power_iteration(q) - [r.spectral_radius for r in reports])))
    rng = np.random.default_rng(7)
    mats = rng.uniform(0, 2, (10_000, 2, 2)) * (rng.uniform(size=(10_000, 2, 2)) > 0.1)
    irreducible = (mats[:, 0, 1] > 0) & (mats[:, 1, 0] > 0)
    ours = np.array([spectral_radius(m) for m in mats])
    oracle = np.where(irreducible, power_iteration(mats), np.max(np.diagonal(mats, axis1=1, axis2=2), axis=1))
    gap = float(np.max(np.abs(ours - oracle)))
    ok = (len(outcomes) == 42 and len(reports) == 42 and consistent and truth_radius < 1
          and all(r.spectral_radius < 1 for r in reports) and fit_gap < 1e-8 and gap < 1e-8)
    record(7, ok, f"{len(reports)}/42 fits, max fitted radius {max(r.spectral_radius for r in reports):.3f} "
                  f"(truth {truth_radius:.3f}); power-iteration gap {gap:.1e} on 10^4 matrices, "
                  f"{fit_gap:.1e} on fitted Q")


def test_criterion_08_baseline_seasonality():
    truth = symmetric_truth(WINDOW, (0.9, 0.3, 0.3, 0.8), 0.25, 0.20, (1.0, 10.0), (0.5, 5.0), b=0.01)
    ordered = 0
    for s in range(20):
        ev = harness.simulate_session(truth, MARKS, 800 + s, feed_resolution=False)
        pair = fit_pair(ev, WINDOW, FitConfig(restarts=2, seed=s))
        ordered += all(min(k[0], k[-1]) > max(k[1:-1])
                       for k in (pair.model.theta(side).baseline.knot_values for side in Side))
    record(8, ordered >= 16, f"open and close knots above mid-session knots on both sides in {ordered}/20 trials")


def _write_fixture(path, records):
    with open(path, "w") as fh:
        fh.write(HEADER)
        for r in records:
            levels = "" if r.levels_consumed is None else r.levels_consumed
            fh.write(f"{r.date},{r.time_cs},{r.side.label},{int(r.size)},"
                     f"{r.opposite_best_size},{levels}\n")


def test_criterion_09_ingestion_fixtures(tmp_path):
    from test_ingestion import rec
    _write_fixture(tmp_path / "table1.csv", table1_records())
    cs = list(range(0, 2 * 9969, 2))
    cs = sorted(cs + cs[:29] + [cs[100], cs[100]])
    _write_fixture(tmp_path / "ties.csv", [rec(OPEN_CS + c, opp=100) for c in cs])
    got = {}
    for name in ("table1", "ties"):
        assert main(["stats", str(tmp_path / f"{name}.csv"), "--out", str(tmp_path / name)]) == EXIT_OK
        got[name] = harness.read_json(tmp_path / name / "stats.json", "stats")
    pen = got["table1"]["penetration"]
    med = got["table1"]["median_volume_lots"]
    dup = got["ties"]["duplicate_timestamp_fraction"]
    ok = (pen["buy"] == [0.867, 0.1047, 0.0224, 0.0038, 0.0011, 0.0006, 0.0004, 0.0]
          and pen["sell"] == [0.8489, 0.1166, 0.0254, 0.0066, 0.0016, 0.0005, 0.0002, 0.0002]
          and med == {"buy": 30.0, "sell": 32.0} and dup == pytest.approx(0.0061, abs=1e-15))
    record(9, ok, f"one-level buys {pen['buy'][0]:.4f}, sells {pen['sell'][0]:.4f}; medians "
                  f"{med['buy']:g}/{med['sell']:g} lots; duplicate fraction {dup:.4f}")


def test_criterion_10_determinism(tmp_path):
    side = {"knots": [0.3, 0.15, 0.15, 0.3],
            "kernels": {"buy": {"k": 0.03, "b": 0.01, "alpha": 0.5, "beta": 2.0},
                        "sell": {"k": 0.02, "b": 0.01, "alpha": 0.3, "beta": 1.5}}}
    mirror = copy.deepcopy(side)
    mirror["kernels"] = {"buy": side["kernels"]["sell"], "sell": side["kernels"]["buy"]}
    conf = tmp_path / "run.yaml"
    conf.write_text(yaml.safe_dump({"seed": 11, "fit": {"restarts": 2}, "simulation": {
        "days": 2, "trials": 2,
        "marks": {"buy": {"kind": "lognormal", "mu": math.log(30), "sigma": 0.5},
                  "sell": {"kind": "lognormal", "mu": math.log(32), "sigma": 0.5}},
        "model": {"form": "difference", "buy": side, "sell": mirror}}}))

    data = tmp_path / "shared"
    assert main(["simulate", "--config", str(conf), "--out", str(data)]) == EXIT_OK

    def run(tag):
        root = tmp_path / tag
        for cmd in ("simulate", "fit", "recovery"):
            assert main([cmd, "--config", str(conf), "--out", str(root / cmd)]) == EXIT_OK
        assert main(["fit", str(data / "data"), "--config", str(conf), "--out", str(root / "refit")]) == EXIT_OK
        assert main(["stats", str(data / "data"), "--out", str(root / "stats")]) == EXIT_OK
        return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}

    first, second = run("a"), run("b")
    differing = sorted(k for k in first.keys() | second.keys() if first.get(k) != second.get(k))
    record(10, not differing and len(first) > 0,
           f"{len(first)} artifacts across simulate/fit/refit/recovery/stats, {len(differing)} differ {differing}")
