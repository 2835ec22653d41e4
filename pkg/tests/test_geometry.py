import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionphotonics.geometry import (
    AsphericSurface, DomainError, Material, TotalInternalReflection, WavelengthRangeError,
    index_at, load_materials, refract, refract_many, sag, sag_slope, surface_normal,
)

ASPH = AsphericSurface(0.0, radius=14.6, conic=-0.8, coeffs=((4, 2e-5), (6, -1e-7)), semi_diameter=12.5)


@given(st.floats(0, 12.5))
def test_sag_even(r):
    assert sag(ASPH, r) == sag(ASPH, -r)


@pytest.mark.parametrize("R", [14.6, -10.367, 50.0])
def test_sphere_limit(R):
    s = AsphericSurface(0.0, radius=R, semi_diameter=min(abs(R), 12.5) * 0.99)
    r = np.linspace(0, s.semi_diameter, 200)
    # R - sqrt(R^2 - r^2), in its cancellation-free form
    exact = r * r / (R + np.sign(R) * np.sqrt(R * R - r * r))
    assert np.allclose(sag(s, r), exact, rtol=1e-12, atol=1e-15)


def test_normal_matches_finite_difference():
    r = np.linspace(0.05, 12.0, 100)
    h = 1e-6
    fd = (sag(ASPH, r + h) - sag(ASPH, r - h)) / (2 * h)
    assert np.allclose(sag_slope(ASPH, r), fd, rtol=1e-7)
    n = surface_normal(ASPH, r, 0.0)
    assert np.allclose(-n[:, 0] / n[:, 2], fd, rtol=1e-7)


def test_plane_normal():
    p = AsphericSurface(1.0)
    assert np.allclose(surface_normal(p, 3.0, 4.0), [0, 0, 1])


def test_domain_errors():
    with pytest.raises(DomainError):
        sag(AsphericSurface(0.0, radius=5.0, semi_diameter=12.5), 6.0)
    with pytest.raises(ValueError):
        AsphericSurface(0.0, coeffs=((5, 1.0),))
    with pytest.raises(ValueError):
        AsphericSurface(0.0, radius=0.0)


unit = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.2, 1)).map(
    lambda v: np.array(v) / np.linalg.norm(v))


@settings(max_examples=200)
@given(unit, st.floats(1.0, 2.0), st.floats(1.0, 2.0))
def test_refract_reversible(d, n1, n2):
    nrm = np.array([0.0, 0.0, 1.0])
    try:
        t = refract(d, nrm, n1, n2)
    except TotalInternalReflection:
        return
    back = refract(-t, -nrm, n2, n1)
    assert np.allclose(-back, d, atol=1e-12)


def test_snell_law_and_tir():
    th = 0.4
    d = np.array([math.sin(th), 0, math.cos(th)])
    t = refract(d, [0, 0, 1.0], 1.0, 1.5)
    assert math.isclose(1.5 * t[0], math.sin(th), rel_tol=1e-14)
    with pytest.raises(TotalInternalReflection):
        refract(np.array([0.9, 0, math.sqrt(1 - 0.81)]), [0, 0, 1.0], 1.5, 1.0)
    _, ok = refract_many(np.array([[0.9, 0, math.sqrt(0.19)], [0, 0, 1.0]]), [[0, 0, 1.0]] * 2, 1.5, 1.0)
    assert ok.tolist() == [False, True]


def test_materials():
    mats = load_materials()
    n = index_at(mats["S-TIH53"], 493.5)
    assert abs(n - 1.8702) < 1e-4
    assert index_at(mats["S-TIH53"], 450) > n  # normal dispersion
    with pytest.raises(WavelengthRangeError):
        index_at(mats["S-TIH53"], 5000)
    assert index_at(Material.constant("x", 1.5), 493.5) == 1.5
