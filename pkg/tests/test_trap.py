import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionphotonics import trap as tp

OMEGA = 2 * math.pi * 20e6


@pytest.mark.parametrize("q", [1e-4, 1e-3, 0.01])
def test_secular_small_a_limit(q):
    mp = tp.MathieuPoint((0.0, 0.0, 0.0), (q, -q, 0.0), OMEGA, tp.BA138)
    wx, wy, wz = tp.secular_frequencies(mp)
    ref = OMEGA / 2 * q / math.sqrt(2) / (2 * math.pi) / 1e3
    assert abs(wx / ref - 1) < 1e-9 and abs(wy / ref - 1) < 1e-9
    assert wz == 0.0


def test_instability():
    with pytest.raises(tp.InstabilityError):
        tp.secular_frequencies(tp.MathieuPoint((0.0, 0.0, 0.0), (0.95, -0.95, 0.0), OMEGA, tp.BA138))
    with pytest.raises(tp.InstabilityError):
        tp.secular_frequencies(tp.MathieuPoint((-0.1, 0.05, 0.05), (0.1, -0.1, 0.0), OMEGA, tp.BA138))
    assert not tp.MathieuPoint((0.0,) * 3, (0.909, -0.909, 0.0), OMEGA, tp.BA138).stable


def test_mass_scaling_of_q_and_radial_frequency():
    g = tp.TrapGeometry()
    d = tp.DriveParameters(needle_dc_V=0.0, dc_quadrupole_V=0.0)
    heavy = tp.Ion("heavy", 2 * tp.BA138.mass_u)
    a = tp.mathieu_params(d, g, tp.BA138)
    b = tp.mathieu_params(d, g, heavy)
    assert math.isclose(a.q[0], 2 * b.q[0], rel_tol=1e-14)
    wa = tp.secular_frequencies(a)[0]
    wb = tp.secular_frequencies(b)[0]
    assert math.isclose(wa, 2 * wb, rel_tol=1e-12)


def test_fitted_frequencies(cfg):
    g = tp.geometry_from_config(cfg)
    d = tp.drive_from_config(cfg)
    f = tp.model_frequencies(d, g, tp.BA138)
    assert abs(f[0] - 330) < 1.0
    assert np.all(np.abs(f[1:] - [705, 888]) < 100)
    assert f[0] < f[1] < f[2]


def test_fit_geometry_factors():
    g = tp.TrapGeometry()
    truth = tp.DriveParameters(kappa_r=0.85, kappa_z=0.014)
    meas = tp.model_frequencies(truth, g, tp.BA138)
    fit = tp.fit_geometry_factors(meas, tp.DriveParameters(), g)
    assert abs(fit.kappa_r - 0.85) < 1e-8 and abs(fit.kappa_z - 0.014) < 1e-10
    axial = tp.fit_geometry_factors(meas[:1], tp.DriveParameters(kappa_r=0.85), g, fit=("kappa_z",))
    assert abs(axial.kappa_z - 0.014) < 1e-6
    with pytest.raises(tp.UnderdeterminedError):
        tp.fit_geometry_factors(meas[:1], tp.DriveParameters(), g)
    with pytest.raises(ValueError):
        tp.fit_geometry_factors(meas, tp.DriveParameters(), g, fit=("kappa_x",))


def test_mass_scaled_axial():
    assert abs(tp.mass_scaled_axial(330, 138, 171) - 296.45) < 0.01


def test_line_charge_laplace_and_symmetry():
    g = tp.TrapGeometry()
    lc = tp.rf_model(g, 1.0)
    h = lc.hessian()
    assert abs(np.trace(h)) < 1e-9 * np.max(np.abs(h))
    gx, gy = lc.gradient(0.0, 0.0)
    assert abs(gx) < 1e-9 and abs(gy) < 1e-9
    assert 1.0 < tp.geometric_kappa_r(g) < 1.5
    st_h = tp.dc_quadrupole_model(g, 1.0).hessian()
    assert abs(np.trace(st_h)) < 1e-9 * np.max(np.abs(st_h))


def test_potential_map(cfg):
    g = tp.geometry_from_config(cfg)
    d = tp.drive_from_config(cfg)
    pm = tp.potential_map(g, d, half_width_mm=0.2, n=81)
    assert np.all(pm.pseudo_eV >= 0)
    assert pm.static_V[40, 40] == 0.0
    wx, wy = tp.pseudo_frequencies(pm)
    d_geo = tp.DriveParameters(**{**d.__dict__, "kappa_r": tp.geometric_kappa_r(g), "needle_dc_V": 0.0,
                                  "dc_quadrupole_V": 0.0})
    ref = tp.secular_frequencies(tp.mathieu_params(d_geo, g))[0]
    assert abs(wx / ref - 1) < 0.01 and abs(wy / ref - 1) < 0.01
    with pytest.raises(tp.ElectrodeOverlapError):
        tp.potential_map(g, d, half_width_mm=0.6)


def test_geometry_validation():
    with pytest.raises(ValueError):
        tp.TrapGeometry(rod_diameter_mm=0.6)
    with pytest.raises(ValueError):
        tp.TrapGeometry(collection_axis="diagonal")
    g = tp.TrapGeometry()
    assert math.isclose(g.r0_mm, math.hypot(0.5, 0.28))


def test_clipping_deterministic_and_chunk_free():
    g = tp.TrapGeometry()
    a = tp.rod_clipping(g, 0.8, 200_000, seed=5)
    b = tp.rod_clipping(g, 0.8, 200_000, seed=5)
    assert a == b
    c = tp.rod_clipping(g, 0.8, 200_000, seed=6)
    assert c.blocked_fraction != a.blocked_fraction


def test_clipping_matches_quadrature():
    g = tp.TrapGeometry()
    r = tp.rod_clipping(g, 0.8, 2_000_000, seed=11)
    assert abs(r.blocked_fraction - tp.clipping_fraction_exact(g, 0.8)) < 3 * r.standard_error


@pytest.mark.parametrize("center", [(0.5, 0.28), (0.0, 0.6), (-0.3, 0.4)])
def test_single_rod_strip_integral(center):
    g = tp.TrapGeometry()
    r = tp.rod_clipping(g, 0.8, 1_000_000, seed=2, centers=[center])
    cone = 2 * math.pi * (1 - math.sqrt(1 - 0.64))
    exact = tp.rod_solid_angle(center, 0.125, 0.8) / cone
    assert abs(r.blocked_fraction - exact) < 3 * r.standard_error


def test_clipping_stderr_scaling():
    g = tp.TrapGeometry()
    ns = [10_000, 100_000, 1_000_000, 10_000_000]
    se = np.array([tp.rod_clipping(g, 0.8, n, seed=3).standard_error for n in ns])
    slope = np.polyfit(np.log10(ns), np.log10(se), 1)[0]
    assert abs(slope + 0.5) < 0.02


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.95))
def test_clipping_fraction_bounded(na):
    f = tp.clipping_fraction_exact(tp.TrapGeometry(), na)
    assert 0 <= f <= 1
