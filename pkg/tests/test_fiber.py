import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionphotonics import fiber as fb
from ionphotonics import waveoptics as wo

WL = 493.5
MODE = fb.gaussian_mode(0.093, WL)


def _field(values, pitch=0.2):
    return wo.FocalField(values, pitch, float(np.sum(np.abs(values) ** 2)), WL, 0.1)


def _mode_field(mode, m=201, pitch=0.2):
    x = (np.arange(m) - m // 2) * pitch
    X, Y = np.meshgrid(x, x, indexing="xy")
    return _field(mode.field(X, Y) * pitch, pitch)


def test_mode_parameters():
    assert math.isclose(MODE.waist_um, WL * 1e-3 / (math.pi * 0.093))
    assert math.isclose(MODE.na_eff, 0.093)
    with pytest.raises(ValueError):
        fb.gaussian_mode(0.5, WL)
    with pytest.raises(ValueError):
        fb.gaussian_mode(0.1, -1)


def test_matched_mode_couples_fully():
    ff = _mode_field(MODE)
    assert abs(fb.overlap(ff, MODE) - 1) < 1e-9
    r = fb.coupling_efficiency(ff, MODE)
    assert abs(r.efficiency - 1) < 1e-9 and r.converged


@pytest.mark.parametrize("frac", [0.1, 0.25, 0.5, 0.75, 1.0])
def test_displaced_gaussian(frac):
    d = frac * MODE.waist_um
    eta = fb.overlap(_mode_field(MODE), MODE, (d, 0.0))
    assert abs(eta / math.exp(-(d / MODE.waist_um) ** 2) - 1) < 0.01


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10), st.floats(0, 2 * math.pi))
def test_efficiency_bounded_and_invariant(seed, scale, phase):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(41, 41)) + 1j * rng.normal(size=(41, 41))
    ff = _field(f)
    eta = fb.overlap(ff, MODE)
    assert 0 <= eta <= 1
    assert math.isclose(fb.overlap(_field(f * scale * np.exp(1j * phase)), MODE), eta, rel_tol=1e-9)


def test_pupil_and_focal_overlap_agree():
    p = wo.uniform_pupil(256, WL, image_na=0.1)
    p = p.with_phase(wo.zernike_phase([0, 0, 0, 0, 0, 0.05, 0.04], 256))
    for off, dz in [((0, 0), 0.0), ((1.0, -0.5), 0.0), ((0.5, 0.5), 3.0)]:
        q = p.with_phase(wo.defocus_phase(p, dz)) if dz else p
        ff = wo.focal_field(q, half_width_airy=14)
        assert abs(fb.overlap(ff, MODE, off) - fb.pupil_overlap(p, MODE, None, dz, off)) < 2e-4


def test_uniform_pupil_optimum():
    # a flat-top pupil into a Gaussian peaks near 0.81 at NA_mode / NA ~ 0.89
    p = wo.uniform_pupil(256, WL, image_na=0.093 / 0.8919)
    assert abs(fb.pupil_overlap(p, MODE) - 0.8145) < 2e-3


def test_optimal_coupling_recovers_shift():
    p = wo.uniform_pupil(256, WL, image_na=0.1)
    tilted = p.with_phase(wo.zernike_phase([0, 0.3], 256) + wo.defocus_phase(p, 4.0))
    r0 = fb.optimal_coupling(p, MODE)
    r1 = fb.optimal_coupling(tilted, MODE)
    assert abs(r1.efficiency - r0.efficiency) < 1e-4
    assert abs(r1.offset_um[0] - 2 * 0.3 * WL * 1e-3 / 0.1) < 0.02
    assert abs(r1.defocus_um + 4.0) < 0.05


def test_design_coupling(design_pupil):
    r = fb.optimal_coupling(design_pupil, MODE)
    assert 0.85 < r.efficiency < 0.9 and r.converged


GOLDEN = {"sigma": 0.9838709677419356, "pi": 0.9919354838709679, "isotropic": 0.5}


@pytest.mark.parametrize("kind", sorted(GOLDEN))
def test_polarization_golden(kind):
    assert abs(fb.polarization_loss(0.8, kind) - GOLDEN[kind]) < 1e-12


@pytest.mark.parametrize("kind", ["sigma", "pi"])
def test_polarization_monotone(kind):
    v = [fb.polarization_loss(na, kind) for na in np.linspace(0.02, 0.95, 20)]
    assert np.all(np.diff(v) < 0)
    assert v[0] > 0.9999


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["sigma", "pi"])
def test_polarization_oracle(kind):
    assert abs(fb.polarization_loss(0.6, kind) - fb.polarization_loss_dblquad(0.6, kind)) < 1e-9


def test_polarization_errors():
    with pytest.raises(ValueError):
        fb.polarization_loss(0.8, "quadrupole")
    with pytest.raises(ValueError):
        fb.polarization_loss(1.2)
