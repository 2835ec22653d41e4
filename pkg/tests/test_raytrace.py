import copy

import numpy as np
import pytest

from ionphotonics import waveoptics as wo
from ionphotonics.design import asphere_only, design_assembly
from ionphotonics.raytrace import (
    IdealLens, OpticalAssembly, best_focus, direction_spread, least_squares_focus, spot_diagram, trace,
)


def test_bookkeeping(design_bundle):
    b = design_bundle
    assert b.vignetted_count + int(b.alive.sum()) == b.launched == len(b.rays)
    assert b.vignetted_count == 0


def test_undersized_aperture_vignettes(cfg, wd):
    c = copy.deepcopy(cfg)
    for side in ("front", "back"):
        c["optics"]["asphere"][side]["semi_diameter_mm"] = "6.0"
    b = trace(asphere_only(c, wd), 0.8, "grid", 33)
    assert 0 < b.vignetted_count < b.launched
    assert b.vignetted_count + int(b.alive.sum()) == b.launched


def test_deterministic(cfg, wd):
    a = trace(design_assembly(cfg, working_distance=wd), 0.8, "random", 500, seed=3)
    b = trace(design_assembly(cfg, working_distance=wd), 0.8, "random", 500, seed=3)
    assert np.array_equal(a.rays.pos, b.rays.pos) and np.array_equal(a.rays.opl, b.rays.opl)


def test_asphere_collimates(collimated_bundle):
    assert direction_spread(collimated_bundle) < 1e-4


def test_opd_matches_wavefront(collimated_bundle):
    # the same rays: grid phase sampled back at each ray equals its path difference
    p = wo.build_pupil(collimated_bundle, 256, reference="plane")
    xy, opd = p.meta["ray_xy"], p.meta["ray_opd_mm"]
    inner = np.hypot(xy[:, 0], xy[:, 1]) < 0.97
    ph = wo.sample_pupil_phase(p, xy[inner])
    grid_opd = ph * p.wavelength_nm * 1e-6 / (2 * np.pi)
    d = grid_opd - opd[inner]
    assert np.max(np.abs(d - d.mean())) < 1e-6


def test_design_diffraction_limited(design_bundle):
    z = best_focus(design_bundle)
    spot = spot_diagram(design_bundle, z)
    f = least_squares_focus(design_bundle)
    assert abs(f[2] - z) < 0.05
    p = wo.build_pupil(design_bundle, 128)
    airy_mm = 0.61 * design_bundle.wavelength_nm * 1e-6 / p.image_na
    assert spot.rms_radius < 0.2 * airy_mm


def test_ideal_lens_focuses_collimated(cfg, wd):
    asm = asphere_only(cfg, wd)
    z_l = asm.elements[0].z_end + 20
    ideal = OpticalAssembly(asm.elements + [IdealLens(z_l, 100.0)], wavelength_nm=493.5)
    b = trace(ideal, 0.8, "grid", 33)
    z = best_focus(b)
    assert abs(z - (z_l + 100.0)) < 1e-3
    # residual is the asphere's collimation error, far below the 3 um Airy radius
    assert spot_diagram(b, z).rms_radius < 1e-3


def test_fan_and_overlap_errors(cfg, wd):
    b = trace(asphere_only(cfg, wd), 0.8, "fan", 21)
    assert b.launched == 21
    with pytest.raises(ValueError):
        trace(asphere_only(cfg, wd), 0.8, "spiral", 21)
    lens = asphere_only(cfg, wd).elements[0]
    with pytest.raises(ValueError):
        OpticalAssembly([lens, lens])
