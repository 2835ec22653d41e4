import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionphotonics import micromotion as mm
from ionphotonics import thermometry as th

ETA = th.lamb_dicke(435, 170.936331, 286, projection=1 / math.sqrt(2))
W0 = mm.pi_time_to_rabi(10.0)


@given(st.floats(0, 200))
def test_thermal_normalisation(nbar):
    p = th.thermal_populations(nbar)
    assert abs(p.sum() - 1) <= th.TAIL_BOUND * 1.0001
    if nbar > 0:
        assert abs(np.sum(np.arange(len(p)) * p) - nbar) < 1e-6 * max(nbar, 1) + 1e-6


def test_truncation_error():
    with pytest.raises(th.TruncationError):
        th.thermal_populations(1000, n_max=100)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 40))
def test_closed_form_matches_sum(nbar):
    t = np.linspace(0, 200, 101)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", th.LambDickeWarning)
        a = th.carrier_decay(W0, ETA, nbar, t)
    assert np.max(np.abs(a - th.carrier_decay_closed(W0, ETA, nbar, t))) < 1e-9


def test_contrast_decreases_with_nbar():
    t = np.linspace(2 * 10.0, 150, 400)  # beyond the first Rabi cycle
    env = []
    for nb in np.linspace(0, 20, 11):
        p = th.carrier_decay_closed(W0, ETA, nb, t)
        env.append(np.max(np.abs(p - 0.5)))
    assert np.all(np.diff(env) <= 1e-12)


def test_lamb_dicke_warning():
    with pytest.warns(th.LambDickeWarning):
        th.carrier_decay(W0, 0.3, 10, [1.0])


def test_fit_round_trip():
    t = np.linspace(0, 150, 200)
    p = th.carrier_decay(W0, ETA, 12.5, t)
    f = th.fit_nbar(t, p, ETA)
    assert abs(f.nbar - 12.5) < 1e-6
    assert abs(f.omega0 / W0 - 1) < 1e-9
    g = th.fit_nbar(t, p, ETA, omega0=W0, fix_omega=True)
    assert abs(g.nbar - 12.5) < 1e-6


def test_fit_errors():
    t = np.linspace(0, 150, 200)
    with pytest.raises(th.FitError):
        th.fit_nbar(t[:5], np.zeros(5), ETA)
    with pytest.raises(th.FitError):
        th.fit_nbar(t, np.full(200, 0.3), ETA)
    with pytest.raises(th.FitError):
        th.fit_nbar(t[:50] / 20, th.carrier_decay(W0, ETA, 5, t[:50] / 20), ETA, omega0=W0)


@pytest.mark.slow
def test_noise_study():
    t = np.linspace(0, 150, 200)
    clean = th.carrier_decay(W0, ETA, 20.0, t)
    err = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        f = th.fit_nbar(t, clean + rng.normal(0, 0.01, t.size), ETA)
        err.append(abs(f.nbar - 20) / 20)
    assert np.median(err) < 0.05


def test_heating_exact():
    d = np.array([0, 2, 5, 10, 20.0])
    f = th.heating_rate(d, 4 + 0.285 * d)
    assert abs(f.rate - 285) < 1e-9 and f.rate_stderr < 1e-9
    with pytest.raises(ValueError):
        th.heating_rate([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        th.heating_rate([1, 2], [1, 2])


def test_heating_noise_calibration():
    d = np.array([0, 5, 10, 15, 20.0])
    sigma = th.nbar_noise_for_stderr(d, 65.0)
    rng = np.random.default_rng(0)
    fits = [th.heating_rate(d, 4 + 0.285 * d + rng.normal(0, sigma, d.size)) for _ in range(4000)]
    rates = np.array([f.rate for f in fits])
    assert abs(np.std(rates) / 65 - 1) < 0.05
    assert abs(np.mean(rates) - 285) < 5


def test_gate_infidelity():
    assert math.isclose(th.gate_infidelity(285, 200), 0.0285, rel_tol=1e-12)
    assert th.gate_infidelity(285, 200) * 2 / 200e-6 == pytest.approx(285, rel=1e-15)
    assert math.isclose(th.gate_infidelity_uncertainty(65, 200), 0.0065, rel_tol=1e-12)
    with pytest.raises(ValueError):
        th.gate_infidelity(-1, 200)


def test_modes_single_mode_matches_closed_form():
    t = np.linspace(0, 100, 201)
    a = th.carrier_decay_modes(W0, [ETA], [7.0], t)
    b = th.carrier_decay_closed(W0, ETA, 7.0, t)
    assert np.max(np.abs(a - b)) < 1e-13


def test_modes_zero_eta_spectator_is_inert():
    t = np.linspace(0, 100, 201)
    a = th.carrier_decay_modes(W0, [ETA, 0.0, 0.0], [7.0, 30.0, 3.0], t)
    assert np.max(np.abs(a - th.carrier_decay_closed(W0, ETA, 7.0, t))) < 1e-13


def test_modes_spectators_add_dephasing_and_fit_recovers_nbar():
    t = np.linspace(0, 80, 120)
    modes = [(0.05, 15.0), (0.04, 10.0)]
    p = th.carrier_decay_modes(W0, [ETA] + [e for e, _ in modes], [8.0] + [n for _, n in modes], t)
    single = th.carrier_decay_closed(W0, ETA, 8.0, t)
    assert np.max(np.abs(p - single)) > 1e-3
    f = th.fit_nbar(t, p, ETA, W0, fix_omega=True, spectators=modes)
    assert f.nbar == pytest.approx(8.0, rel=1e-6)


def test_modes_shape_mismatch():
    with pytest.raises(ValueError):
        th.carrier_decay_modes(W0, [ETA, 0.1], [1.0], [0.0, 1.0])
