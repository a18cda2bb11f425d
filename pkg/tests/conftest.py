import numpy as np
import pytest

from hawkesflow.baseline import BaselineSpline, SessionWindow
from hawkesflow.intensity import EventStream, ModelPair, ModelTheta
from hawkesflow.kernels import KernelForm, KernelParams

# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in range(1, 11):
        if num not in ACCEPTANCE:
            terminalreporter.write_line(f"criterion {num:2d}: NOT RUN")
            continue
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_kernel(rng, form=KernelForm.DIFFERENCE, scale=1.0):
    alpha = float(rng.uniform(0.2, 3.0))
    beta = alpha * float(rng.uniform(1.5, 10.0))
    return KernelParams(k=float(rng.uniform(0.05, 0.5)) * scale, b=float(rng.uniform(-0.02, 0.02)),
                        alpha=alpha, beta=beta, form=form)


def random_theta(rng, side=1, form=KernelForm.DIFFERENCE, length=200.0, scale=1.0):
    window = SessionWindow.relative([0.0, length / 4, length / 2, length])
    knots = tuple(float(x) for x in rng.uniform(0.2, 1.5, 4))
    return ModelTheta(side, (random_kernel(rng, form, scale), random_kernel(rng, form, scale)),
                      BaselineSpline(window, knots))


def random_stream(rng, n, length=200.0, vmax=60.0):
    times = np.sort(rng.uniform(0, length, n))
    return EventStream(times, rng.integers(1, 3, n), rng.uniform(0.5, vmax, n))


def pair_of(theta_buy, theta_sell):
    return ModelPair(theta_buy, theta_sell)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def symmetric_truth(window, knots, self_mass, cross_mass, self_ab, cross_ab, b=0.0, v_ref=30.0,
                    form=KernelForm.DIFFERENCE):
    """Pair with mirrored sides, kernels specified by their mass at mark ``v_ref``."""
    def make(mass, ab):
        a, be = ab
        shape = 1 / a + form.sign / be
        return KernelParams(mass / (np.exp(b * v_ref) * shape), b, a, be, form)

    s, c = make(self_mass, self_ab), make(cross_mass, cross_ab)
    spline = BaselineSpline(window, tuple(knots))
    return ModelPair(ModelTheta(1, (s, c), spline), ModelTheta(2, (c, s), spline))
