import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cases import (
    ALT_HISTORY, P, fasting_period, fig1c, fig1d, fig1e, harmonic, one_to_one, run,
)
from ultradian.analysis import (
    BOUNDARY, LOCKED, PERIODIC, QUASI_PERIODIC, STEADY, amplitude_gain, classify, cluster_1d,
    peaks, post_transient, required_span, shift_residual, summaries_to_csv, transient_length,
)
from ultradian.forcing import InfusionProtocol
from ultradian.model import equilibrium
from ultradian.simulation import simulate


def test_transient_length():
    assert transient_length(InfusionProtocol.on_off(1.0, 60.0, 30.0), (5, 20)) == 8500.0
    assert transient_length(None, (5, 20)) == 100 * (25 + 132)
    assert transient_length(InfusionProtocol.on_off(0.0, 60.0, 30.0), (5, 20)) == 100 * (25 + 132)


def test_post_transient_span_check():
    prot = InfusionProtocol.on_off(1.0, 60.0, 30.0)
    tr = simulate(P, prot, span=16000.0)
    with pytest.raises(ValueError):
        post_transient(tr, prot, P.delays)
    w = post_transient(tr, prot, P.delays, min_window=7000.0)
    assert w.t_cut == pytest.approx(8500.0) and w.times[0] == pytest.approx(8500.0)
    assert w.length == pytest.approx(7500.0)
    assert w.values.shape[0] == w.times.size


def test_steady_window_at_equilibrium():
    tr, s = run(fig1c())
    eq = equilibrium(P, 1.35)
    w = post_transient(tr, fig1c(), P.delays, min_window=1000.0)
    assert np.max(np.abs(w.G - eq.G_star)) < 1e-4
    assert np.max(np.abs(w.I - eq.I_star)) < 1e-4
    assert s.label == STEADY and s.period is None
    assert s.amplitude < 0.5
    assert abs(tr.values[-1, 0] - eq.G_star) < 10 * 0.5


def test_doubling_cut_keeps_extremes():
    cut = transient_length(None, P.delays)
    tr = simulate(P, span=2 * cut + 20 * 132.0)
    a = classify(tr, None, P.delays, n_strobe=20)
    b = classify(tr, None, P.delays, n_strobe=20, cut=2 * cut)
    assert abs(a.G_max - b.G_max) < 1e-3 * a.G_max
    assert abs(a.G_min - b.G_min) < 1e-3 * a.G_min


def test_peaks_sinusoid():
    dt = 0.5
    t = np.arange(0, 400, dt)
    y = np.sin(2 * np.pi * t / 37.3 + 0.4)
    pk = peaks(y, t)
    exact = (np.pi / 2 - 0.4 + 2 * np.pi * np.arange(0, 12)) * 37.3 / (2 * np.pi)
    exact = exact[exact < t[-1]]
    assert pk.shape == (exact.size, 2)
    assert np.max(np.abs(pk[:, 0] - exact)) < dt / 10
    assert np.allclose(pk[:, 1], 1.0, atol=1e-3)


def test_peaks_degenerate():
    assert peaks(np.arange(50.0)).shape == (0, 2)
    assert peaks([1.0, 2.0]).shape == (0, 2)
    y = np.array([0, 1, 3, 3, 3, 1, 0, 2, 0], float)
    pk = peaks(y, dt=2.0)
    assert pk[0].tolist() == [4.0, 3.0]
    assert pk[1, 0] == pytest.approx(14.0)


def test_peaks_prominence_filter():
    t = np.arange(0, 200, 0.1)
    y = np.sin(2 * np.pi * t / 50) + 0.02 * np.sin(2 * np.pi * t / 3)
    assert len(peaks(y, t, prominence=0.5)) == 4
    assert len(peaks(y, t)) > 4


def test_fasting_peak_spacing():
    tr, s = run()
    w = post_transient(tr, None, P.delays, min_window=5000.0)
    pk = peaks(w.G, w.times, prominence=1.0)
    sp = np.diff(pk[:, 0])
    assert np.ptp(sp) < 0.1
    assert np.mean(sp) == pytest.approx(132.0, rel=0.05)
    assert s.label == PERIODIC and s.period == pytest.approx(np.mean(sp), rel=1e-3)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=60), st.floats(0.1, 5.0))
def test_cluster_1d_properties(x, gap):
    groups = cluster_1d(x, gap)
    xs = np.sort(x)
    assert groups[0][0] == xs[0] and groups[-1][1] == xs[-1]
    for (a, b), (c, d) in zip(groups[:-1], groups[1:]):
        assert c - b > gap
    for a, b in groups:
        inside = xs[(xs >= a) & (xs <= b)]
        assert np.all(np.diff(inside) <= gap)


def test_classify_quasi_periodic():
    tr, s = run(fig1d())
    assert s.label == QUASI_PERIODIC
    assert s.strobe_range > 10 and s.n_strobe >= 64
    assert s.dispersion > 2


def test_classify_one_to_one():
    tr, s = run(one_to_one())
    assert s.label == LOCKED and (s.p, s.q) == (1, 1)
    assert s.period == pytest.approx(fasting_period())


@pytest.mark.parametrize("q", [2, 3])
def test_classify_harmonics(q):
    tr, s = run(harmonic(q))
    assert s.label == LOCKED and (s.p, s.q) == (1, q)


def test_locked_shift_invariance():
    for prot in (one_to_one(), harmonic(2), harmonic(3), fig1e()):
        tr, s = run(prot)
        if s.label == LOCKED:
            assert shift_residual(tr, s.t_cut, s.p * prot.T_in) < 0.5


INVARIANCE_CASES = {
    "constant": fig1c,
    "fig1d": fig1d,
    "fig1e": fig1e,
    "one_to_one": one_to_one,
}


@pytest.mark.parametrize("name", sorted(INVARIANCE_CASES))
def test_label_invariant_to_lag_and_history(name):
    make = INVARIANCE_CASES[name]
    ref = run(make())[1]
    assert run(make(), history=ALT_HISTORY)[1].label == ref.label
    if make().periodic:
        prot = make(sigma=make().T_in / 3)
        assert run(prot)[1].label == ref.label


@pytest.mark.parametrize("name", ["fig1d", "one_to_one"])
def test_label_stable_under_doubled_strobe_count(name):
    make = INVARIANCE_CASES[name]
    a, b = run(make())[1], run(make(), n_strobe=128)[1]
    assert a.label == b.label and (a.p, a.q) == (b.p, b.q)
    assert b.n_strobe >= 128


def test_unforced_decay_flagged():
    p = P.replace(tau_I=4.0, tau_G=15.0)       # just below the curve: slow decay
    span = required_span(None, p.delays, 20)
    tr = simulate(p, span=span, history=(110.0, 60.0))
    s = classify(tr, None, p.delays, n_strobe=20)
    assert s.label in (BOUNDARY, STEADY)
    if s.label == BOUNDARY:
        assert "amplitude-trend" in s.flags


def test_classify_needs_window():
    tr = simulate(P, fig1d(), span=9000.0)
    with pytest.raises(ValueError):
        classify(tr, fig1d(), P.delays)


def test_summary_invariants():
    for prot in (None, fig1c(), fig1d(), one_to_one()):
        s = run(prot)[1]
        assert s.G_max >= s.G_min > 0 and s.I_max >= s.I_min >= 0
        if s.label in (LOCKED, STEADY):
            assert s.dispersion is None or s.dispersion < 0.5
        if s.label == QUASI_PERIODIC:
            assert s.dispersion >= 0.5


def test_amplitude_gain():
    base = run()[1]
    assert amplitude_gain(base, base) == 1.0
    assert amplitude_gain(base, base, measure="maximum") == 1.0
    with pytest.raises(ValueError):
        amplitude_gain(base, run(fig1c())[1])
    with pytest.raises(ValueError):
        amplitude_gain(base, base, measure="rms")


def test_summary_csv_and_report(tmp_path):
    rows = [run()[1], run(fig1c())[1], run(one_to_one())[1]]
    f = tmp_path / "s.csv"
    text = summaries_to_csv(rows, f)
    assert f.read_text() == text
    lines = text.splitlines()
    assert lines[0].startswith("label,p,q,period,G_max")
    assert lines[2].startswith("steady,,,,")
    assert lines[3].startswith("locked,1,1,")
    assert "p=1, q=1" in rows[2].report()
    assert "h)" in rows[0].report()
