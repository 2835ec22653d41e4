import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import jv

from ionphotonics import micromotion as mm


def test_published_ratio():
    assert abs(mm.beta_from_ratio(0.011) - 0.022) < 5e-4


@given(st.floats(0, 1.0))
def test_round_trip(beta):
    assert abs(mm.beta_from_ratio(float(mm.bessel_ratio(beta))) - beta) < 1e-10


@given(st.floats(1e-6, 0.05))
def test_small_beta_expansion(r):
    # the true gap is r^3 (1 - 5 r^2 / 6); allow for rounding of beta itself
    assert abs(mm.beta_from_ratio(r) - 2 * r) <= r**3 + 4 * np.spacing(2 * r)


def test_range_errors():
    with pytest.raises(ValueError):
        mm.beta_from_ratio(-0.1)
    with pytest.raises(ValueError):
        mm.beta_from_ratio(float("nan"))
    with pytest.raises(ValueError):
        mm.beta_from_ratio(1e3)
    assert mm.beta_from_ratio(0.0) == 0.0


def test_sideband_pi_pulse():
    w0 = mm.pi_time_to_rabi(5.5)
    p = mm.sideband_spectrum(0.022, w0, 500.0, 0.0)
    assert p > 0.95
    assert math.isclose(abs(jv(1, 0.022)) * w0 * 500e-6, math.pi, rel_tol=0.02)


def test_spectrum_symmetric_and_monotone():
    w0 = mm.pi_time_to_rabi(5.5)
    det = np.linspace(-5, 5, 201)
    s = mm.sideband_spectrum(0.02, w0, 100.0, det)
    assert np.allclose(s, s[::-1], atol=1e-15)
    assert np.argmax(s) == 100
    # below a pi pulse the resonant height grows with beta
    # at t = 20 us the pulse area J1(0.5) w0 t stays below pi
    peaks = [mm.sideband_spectrum(b, w0, 20.0, 0.0) for b in np.linspace(0, 0.5, 26)]
    assert np.all(np.diff(peaks) > 0)


def test_regime_warning():
    with pytest.warns(mm.RegimeWarning):
        mm.sideband_spectrum(0.5, mm.pi_time_to_rabi(0.1), 1.0, 0.0, micromotion_freq_kHz=100)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        mm.sideband_spectrum(0.022, mm.pi_time_to_rabi(5.5), 500, 0.0, micromotion_freq_kHz=20e3)


def test_displacement_conversion():
    k = mm.wavevector(493.5)
    b = mm.displacement_to_beta(0.1, 0.13, k, 0.7)
    assert math.isclose(mm.beta_to_displacement(b, 0.13, k, 0.7), 0.1, rel_tol=1e-14)
    with pytest.raises(ValueError):
        mm.beta_to_displacement(0.1, 0.0, k, 0.7)
