import math

import numpy as np
import pytest
from scipy.stats import kstwobign, kstest

from hawkesflow.baseline import BaselineSpline, SessionWindow
from hawkesflow.diagnostics import (ResidualSeries, kolmogorov_sf, ks_test,
                                    qq_points, residuals)
from hawkesflow.errors import InsufficientEvents, InvalidParameters, TooFewSamples
from hawkesflow.intensity import EventStream, ModelTheta, Side, compensator
from hawkesflow.kernels import KernelParams
from hawkesflow.simulation import MarkDistribution, SimConfig, simulate

from conftest import random_stream, random_theta, symmetric_truth

TINY = KernelParams(1e-300, 0.0, 1.0, 2.0)


def test_unit_rate_example():
    th = ModelTheta(1, (TINY, TINY), BaselineSpline(SessionWindow.relative([0, 5, 10]), (1, 1, 1)))
    ev = EventStream([1, 1.5, 2, 3], [1, 2, 1, 1], [1, 1, 1, 1])
    assert residuals(th, ev, Side.BUY).taus == pytest.approx([1, 1, 1], abs=1e-15)
    with pytest.raises(InvalidParameters):
        residuals(th, ev, Side.SELL)


def test_insufficient_and_too_few():
    th = ModelTheta(1, (TINY, TINY), BaselineSpline(SessionWindow.relative([0, 10]), (1, 1)))
    with pytest.raises(InsufficientEvents):
        residuals(th, EventStream([1.0], [1], [1.0]), Side.BUY)
    with pytest.raises(TooFewSamples):
        ks_test(ResidualSeries(Side.BUY, np.ones(9)))
    with pytest.raises(TooFewSamples):
        qq_points(np.ones(1))
    with pytest.raises(InvalidParameters):
        ResidualSeries(Side.BUY, [1.0, 0.0])


def test_telescoping(rng):
    th = random_theta(rng, 2)
    ev = random_stream(rng, 200)
    taus = residuals(th, ev, Side.SELL).taus
    sells = ev.side_times(Side.SELL)
    assert taus.sum() - taus[0] == pytest.approx(compensator(th, ev, sells[0], sells[-1]), abs=1e-10)
    assert taus[0] == pytest.approx(compensator(th, ev, 0.0, sells[0]), abs=1e-12)


def test_degenerate_sample():
    rep = ks_test(np.ones(100))
    assert rep.statistic == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert rep.p_value < 1e-10 and not rep.pass_at_5pct
    assert kolmogorov_sf(0.0) == 1.0


def test_zero_statistic_gives_one(monkeypatch):
    import hawkesflow.diagnostics as d
    monkeypatch.setattr(d, "ks_statistic", lambda s: 0.0)
    assert d.ks_test(np.ones(20)).p_value == 1.0


def test_statistic_and_p_against_scipy(rng):
    for n in (10, 34, 35, 200, 5000):
        x = rng.exponential(size=n)
        rep = ks_test(x)
        ref = kstest(x, "expon")
        assert rep.statistic == pytest.approx(ref.statistic, abs=1e-14)
        assert rep.p_value == pytest.approx(kstwobign.sf(math.sqrt(n) * rep.statistic), abs=1e-12)
        assert rep.approximate == (n < 35)
    grid = np.linspace(0.05, 3, 200)
    sf = [kolmogorov_sf(z) for z in grid]
    assert np.all(np.diff(sf) <= 0)


def test_p_values_uniform_under_null():
    rng = np.random.default_rng(2024)
    ps = [ks_test(rng.exponential(size=1000)).p_value for _ in range(500)]
    assert kstest(ps, "uniform").statistic < 0.08


def test_qq_examples():
    n = 50
    exact = -np.log1p(-(np.arange(1, n + 1) - 0.5) / n)
    pts = qq_points(exact[::-1])
    assert np.max(np.abs(pts[:, 0] - pts[:, 1])) < 1e-12
    rng = np.random.default_rng(9)
    good = 0
    for _ in range(100):
        pts = qq_points(rng.exponential(size=5000))
        m = pts[:, 0] < 3
        good += np.max(np.abs(pts[m, 1] - pts[m, 0])) < 0.15
    assert good >= 95
    pts = qq_points(2 * rng.exponential(size=5000))
    slope = np.polyfit(pts[:, 0], pts[:, 1], 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)


def test_true_model_residual_mean():
    win = SessionWindow.relative([0, 1000, 2000, 4000])
    truth = symmetric_truth(win, (0.6, 0.4, 0.4, 0.6), 0.3, 0.2, (1.0, 6.0), (0.5, 4.0), b=0.01)
    ev = simulate(SimConfig(truth, (MarkDistribution.lognormal(math.log(30), 0.5),) * 2, seed=4))
    for side in Side:
        series = residuals(truth.theta(side), ev, side)
        assert series.n >= 2000
        assert 0.95 <= series.taus.mean() <= 1.05
