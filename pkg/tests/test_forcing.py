import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from ultradian.forcing import InfusionProtocol, infusion_rate, rate_kernel, sigmoid


def test_sigmoid_basic():
    assert sigmoid(0.0, 7.0) == 0.5
    y = np.random.default_rng(0).normal(0, 2, 10)
    np.testing.assert_allclose(sigmoid(y, 3.0) + sigmoid(-y, 3.0), 1.0, atol=1e-15)
    assert sigmoid(0.1, 100) > 1 - 1e-4
    assert sigmoid(-1e6, 100) == 0.0 and sigmoid(1e6, 100) == 1.0


def test_constant_protocol():
    p = InfusionProtocol.constant(1.35)
    assert p(12.0) == 1.35
    np.testing.assert_array_equal(p(np.arange(4.0)), 1.35)
    assert p.G_bar == 1.35 and not p.periodic
    assert InfusionProtocol.fasting()(3.0) == 0.0


def test_mid_pulse_and_mid_gap():
    for sigma in (0.0, 17.0):
        p = InfusionProtocol.on_off(2.0, 120.0, 60.0, sigma=sigma)
        assert abs(p(sigma + 30.0) - 2.0) < 1e-4 * 2.0
        assert p(sigma + 90.0) < 1e-4 * 2.0


def test_period_mean_matches_g_bar():
    p = InfusionProtocol.from_mean(1.0, 180.0, 30.0)
    assert p.G_max == pytest.approx(6.0)
    mean = quad(p, 0.0, 180.0, points=[30.0, 90.0], limit=500, epsabs=1e-12)[0] / 180.0
    assert mean == pytest.approx(p.G_bar, rel=0.01)


@pytest.mark.parametrize("G_max, T_in, t_in", [(1.35, 60.0, 30.0), (24.3, 180.0, 5.0)])
def test_square_pulse_shape(G_max, T_in, t_in):
    # one pulse per period: half-maximum support [0, t_in], near-flat top, zero elsewhere
    p = InfusionProtocol.on_off(G_max, T_in, t_in)
    t = np.linspace(0.0, T_in, 400_001)
    r = p(t)
    on = t[r >= G_max / 2]
    edge = T_in / (p.k * math.pi)
    assert on.min() == pytest.approx(0.0, abs=edge)
    assert on.max() == pytest.approx(t_in, abs=edge)
    assert np.all(np.diff(on) < 2 * (t[1] - t[0]))          # a single interval
    assert r.max() > 0.999 * G_max
    assert np.all(r[(t > t_in + 10 * edge) & (t < T_in - 10 * edge)] < 1e-3 * G_max)


def test_rejects_invalid():
    with pytest.raises(ValueError):
        InfusionProtocol.on_off(1.0, 100.0, 60.0)
    with pytest.raises(ValueError):
        InfusionProtocol.on_off(-1.0, 100.0, 30.0)
    with pytest.raises(ValueError):
        InfusionProtocol.on_off(1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        InfusionProtocol.on_off(1.0, 100.0, 30.0, k=0.0)
    with pytest.raises(ValueError):
        InfusionProtocol("pulse")
    InfusionProtocol.on_off(1.0, 100.0, 50.0)


protocols = st.builds(
    lambda G, T, frac, sig: InfusionProtocol.on_off(G, T, frac * T / 2, sig),
    st.floats(0.0, 30.0), st.floats(20.0, 400.0), st.floats(0.05, 1.0), st.floats(0.0, 200.0),
)


@settings(max_examples=40, deadline=None)
@given(protocols, st.floats(0.0, 2000.0))
def test_periodic_and_bounded(p, t):
    r = p(t)
    assert 0.0 <= r <= p.G_max
    assert abs(p(t + p.T_in) - r) <= 1e-12 * max(1.0, p.G_max) + 1e-9 * p.G_max


@settings(max_examples=25, deadline=None)
@given(protocols, st.floats(-50.0, 50.0))
def test_lag_equivariance(p, delta):
    q = InfusionProtocol.on_off(p.G_max, p.T_in, p.t_in, p.sigma + delta)
    t = np.linspace(0.0, 3 * p.T_in, 301)
    np.testing.assert_allclose(q(t + delta), p(t), atol=1e-9 * max(1.0, p.G_max))


@settings(max_examples=25, deadline=None)
@given(protocols)
def test_derivative_bound(p):
    t = np.linspace(0.0, p.T_in, 200_001)
    r = p(t)
    slope = np.max(np.abs(np.diff(r) / np.diff(t)))
    assert slope <= p.G_max * p.k * 2 * np.pi / p.T_in * 1.1 + 1e-12


def test_compiled_twin_matches():
    p = InfusionProtocol.on_off(3.0, 90.0, 20.0, sigma=4.0)
    a = p.as_args()
    for t in np.linspace(-10.0, 400.0, 97):
        assert rate_kernel(t, *a) == pytest.approx(infusion_rate(t, p), rel=1e-13, abs=1e-300)
    c = InfusionProtocol.constant(0.7).as_args()
    assert rate_kernel(5.0, *c) == 0.7
