"""Acceptance checks against the published numbers.

Each check returns a :class:`Check` row carrying the computed value, the
target with its tolerance, and a pass flag. ``tolerance_scale`` widens (or
tightens) every numeric tolerance uniformly.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import jv

from . import budget, fiber, micromotion as mm, thermometry as th, trap as tp
from . import waveoptics as wo
from .config import load_data, num, num_list
from .design import default_config, design_assembly
from .geometry import refract_many
from .raytrace import best_focus, spot_diagram, trace


@dataclass
class Check:
    id: int
    name: str
    value: float | None
    target: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        v = "n/a" if self.value is None else f"{self.value:.6g}"
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.id:2d} {self.name}: {v} (target {self.target})"

    def as_dict(self) -> dict:
        d = asdict(self)
        d["seconds"] = round(self.seconds, 3)
        return d


def published() -> dict:
    return load_data("published_constants.toml")


def _pv(c, key):
    v = c[key]["value"]
    return num_list(v) if isinstance(v, list) else num(v)


def _pu(c, key):
    return num(c[key].get("uncertainty", 0))


# -- optics shared by 3, 4 and 12 ----------------------------------------------------

_CACHE: dict = {}


def nominal_pupil(cfg: dict, n: int | None = None, rays_across: int = 129):
    n = int(cfg["wave"]["pupil_grid"]) if n is None else n
    key = ("pupil", n, rays_across, cfg["wave"]["apodization"], id(cfg))
    if key not in _CACHE:
        bundle = trace(design_assembly(cfg), num(cfg["optics"]["collection_na"]), "grid", rays_across)
        _CACHE[key] = (bundle, wo.build_pupil(bundle, n, cfg["wave"]["apodization"]))
    return _CACHE[key]


def check_solid_angle(cfg, tol=1.0):
    c = published()
    v = budget.solid_angle_fraction(_pv(c, "collection_na"))
    ok = abs(v - 0.2) <= 1e-12 * tol
    return Check(1, "solid-angle fraction at NA 0.8", v, "0.200 +- 1e-12", ok)


def chain_factors(c=None) -> list[budget.EfficiencyFactor]:
    c = published() if c is None else c
    mk = budget.EfficiencyFactor
    return [
        mk("solid angle", budget.solid_angle_fraction(_pv(c, "collection_na")), 0.0, "computed"),
        mk("lens transmission", _pv(c, "lens_transmission"),
           _pu(c, "lens_transmission") / _pv(c, "lens_transmission")),
        mk("rod transmission", _pv(c, "rod_transmission"),
           _pu(c, "rod_transmission") / _pv(c, "rod_transmission")),
        mk("fiber coupling", _pv(c, "fiber_coupling_measured"),
           _pu(c, "fiber_coupling_measured") / _pv(c, "fiber_coupling_measured")),
    ]


def check_chain(cfg, tol=1.0):
    c = published()
    v, u = budget.chain(chain_factors(c))
    two = budget.total_two_sided((v, v))
    # 0.0529 is quoted to four decimals: agree to one unit in the last digit
    ok_v = abs(v - 0.0529) <= 1e-4 * tol and math.isclose(v, 0.20 * 0.91 * 0.97 * 0.30, rel_tol=1e-12)
    # quadrature of 3/91, 1/97 and 3/30 gives 0.0056; the published +-0.005 is that value rounded
    ok_u = abs(u - 0.0056) <= 0.1 * 0.0056 * tol
    ok_two = abs(two - _pv(c, "two_sided_efficiency")) <= _pu(c, "two_sided_efficiency") * tol
    return Check(2, "efficiency chain per side", v, "0.0529, uncertainty 0.0056 +- 10%, two-sided 0.10(1)",
                 ok_v and ok_u and ok_two, {"uncertainty": u, "two_sided": two})


def check_fiber_coupling(cfg, tol=1.0):
    _, pupil = nominal_pupil(cfg)
    mode = fiber.gaussian_mode(num(cfg["fiber"]["na_eff"]), pupil.wavelength_nm)
    r = fiber.optimal_coupling(pupil, mode)
    target = _pv(published(), "fiber_coupling_theory")
    ok = abs(r.efficiency - target) <= 0.05 * tol and r.converged
    return Check(3, "theoretical fiber coupling (cos^3 apodization)", r.efficiency, f"{target} +- 0.05", ok,
                 {"defocus_um": r.defocus_um, "offset_um": list(r.offset_um), "converged": r.converged,
                  "pupil_grid": pupil.n, "image_na": pupil.image_na})


def check_diffraction_limit(cfg, tol=1.0):
    bundle, pupil = nominal_pupil(cfg)
    z = best_focus(bundle)
    spot = spot_diagram(bundle, z)
    airy_mm = 0.61 * pupil.wavelength_nm * 1e-6 / pupil.image_na
    s = wo.strehl_ratio(pupil)
    ok = spot.rms_radius < airy_mm * tol and s > 0.8 / tol
    return Check(4, "geometric RMS spot / Airy radius; Strehl", spot.rms_radius / airy_mm,
                 "ratio < 1 and Strehl > 0.8", ok,
                 {"rms_spot_um": spot.rms_radius * 1e3, "airy_um": airy_mm * 1e3, "strehl": s,
                  "focus_z_mm": z})


def check_rod_clipping(cfg, tol=1.0, seed=None):
    geom = tp.geometry_from_config(cfg)
    na = num(cfg["clipping"]["na"])
    samples = int(cfg["clipping"]["samples"])
    seed = int(cfg["run"]["seed"]) if seed is None else seed
    rows = {}
    for orient in ("normal-to-1mm-pair", "along-1mm-pair"):
        g = replace(geom, collection_axis=orient)
        r = tp.rod_clipping(g, na, samples, seed)
        rows[orient] = {"blocked": r.blocked_fraction, "stderr": r.standard_error,
                        "quadrature": tp.clipping_fraction_exact(g, na)}
    target = _pv(published(), "rod_blocking")

    def good(row):
        return abs(row["blocked"] - target) <= 0.01 * tol and row["stderr"] < 0.002

    # either orientation is accepted: which rod pair faces the lens is not fixed by the drawings
    best = min(rows, key=lambda k: abs(rows[k]["blocked"] - target))
    ok = any(good(r) for r in rows.values())
    return Check(5, "rod clipping at NA 0.8", rows[best]["blocked"], f"{target} +- 0.01, stderr < 0.002",
                 ok, {"orientation": best, "by_orientation": rows, "samples": samples, "seed": seed})


def check_micromotion(cfg, tol=1.0):
    b = mm.beta_from_ratio(0.011)
    grid = np.linspace(0, 1, 201)
    err = max(abs(mm.beta_from_ratio(float(mm.bessel_ratio(x))) - x) for x in grid)
    ok = abs(b - _pv(published(), "micromotion_beta")) <= 5e-4 * tol and err < 1e-10 * tol
    return Check(6, "modulation index from ratio 0.011", b, "0.022 +- 0.0005; round trip < 1e-10", ok,
                 {"round_trip_max_error": err})


def check_sideband(cfg, tol=1.0):
    c = published()
    w0 = mm.pi_time_to_rabi(_pv(c, "carrier_pi_time"))
    p = float(mm.sideband_spectrum(_pv(c, "micromotion_beta"), w0, _pv(c, "sideband_probe_time"), [0.0])[0])
    area = float(jv(1, _pv(c, "micromotion_beta"))) * w0 * _pv(c, "sideband_probe_time") * 1e-6
    return Check(7, "resonant first-sideband excitation", p, "> 0.95", p > 1 - 0.05 * tol,
                 {"pulse_area_over_pi": area / math.pi})


def check_mass_scaling(cfg, tol=1.0):
    c = published()
    ba = _pv(c, "secular_ba")[0]
    pred = tp.mass_scaled_axial(ba, 138, 171)
    meas = _pv(c, "secular_yb_axial")
    rel = abs(pred - meas) / meas
    return Check(8, "Yb axial frequency from Ba by mass scaling", pred, f"{meas} kHz within 5%",
                 rel <= 0.05 * tol, {"relative_difference": rel})


def check_gate(cfg, tol=1.0):
    c = published()
    rate, drate = _pv(c, "heating_rate_6mm"), _pu(c, "heating_rate_6mm")
    tau = _pv(c, "gate_time")
    f = th.gate_infidelity(rate, tau)
    df = th.gate_infidelity_uncertainty(drate, tau)
    tgt, dt = _pv(c, "gate_infidelity"), _pu(c, "gate_infidelity")
    ok = abs(f - tgt) <= dt * tol and abs(df - 0.0065) <= 0.1 * 0.0065 * tol
    return Check(9, "heating-limited gate infidelity", f, "0.028 +- 0.006; uncertainty 0.0065 +- 10%", ok,
                 {"uncertainty": df})


def check_rates(cfg, tol=1.0):
    c = published()
    att = budget.attempt_rate_from(_pv(c, "baseline_rate"), _pv(c, "baseline_success_probability"))
    scn = budget.load_scenario(None if cfg["budget"]["scenario"] == "rate_scenario.toml"
                               else cfg["budget"]["scenario"])
    res = budget.run_scenario(scn)
    ok = abs(att - 8.35e5) <= 0.005 * 8.35e5 * tol and abs(res.ratio - 3.5) <= 0.5 * tol
    return Check(10, "attempt rate and rate ratio", res.ratio, "attempt 8.35e5 +- 0.5%; ratio 3.5 +- 0.5", ok,
                 {"attempt_rate_per_s": att, "per_side_efficiency": res.per_side,
                  "efficiency_ratio_squared": res.efficiency_ratio_squared,
                  "direction_factor": res.direction_factor, "assumed": res.assumed,
                  "scenario_reconstructed": bool(scn.get("scenario", {}).get("reconstructed", False))})


def property_suite(seed: int) -> dict:
    rng = np.random.default_rng(seed)
    out = {}
    # Zernike round trip
    coef = rng.normal(scale=0.3, size=21)
    u = wo.uniform_pupil(256)
    fit = wo.zernike_fit(u.with_phase(wo.zernike_phase(coef, 256)), 21)
    out["zernike_round_trip_waves"] = float(np.max(np.abs(fit.coefficients - coef)))
    # Parseval on the unzoomed transform
    ph = wo.zernike_phase(rng.normal(scale=0.2, size=15), 256)
    p = u.with_phase(ph)
    ff = wo.full_field_fft(p, 0.1)
    out["parseval_relative"] = abs(ff.intensity.sum() / ff.total_power - 1)
    # Laplace residual of the line-charge model
    geom = tp.TrapGeometry()
    lc = tp.rf_model(geom, 1.0)
    h = 1e-3
    pts = rng.uniform(-0.2, 0.2, size=(50, 2))
    lap = []
    for x, y in pts:
        xs = x + h * np.array([-2, -1, 0, 1, 2])
        ys = y + h * np.array([-2, -1, 0, 1, 2])
        w = np.array([-1, 16, -30, 16, -1]) / (12 * h * h)
        lap.append(abs(w @ lc.potential(xs, y) + w @ lc.potential(x, ys)))
    out["laplace_relative"] = float(max(lap))  # potential scale 1 V, lengths in mm
    # fit_nbar round trip
    eta = th.lamb_dicke(435, 171, 286)
    w0 = mm.pi_time_to_rabi(5.5)
    t = np.linspace(0, 60, 160)
    f = th.fit_nbar(t, th.carrier_decay(w0, eta, 12.5, t), eta)
    out["fit_nbar_round_trip"] = abs(f.nbar - 12.5)
    # exact OLS
    d = np.array([0, 5, 10, 20, 40.0])
    hf = th.heating_rate(d, 3 + 0.285 * d)
    out["heating_slope_error"] = abs(hf.rate - 285)
    # Snell reversibility
    v = rng.normal(size=(1000, 3))
    v[:, 2] = np.abs(v[:, 2]) + 0.5
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    nrm = np.tile([0, 0, 1.0], (1000, 1))
    t1, ok1 = refract_many(v, nrm, 1.0, 1.87)
    t2, _ = refract_many(-t1, nrm, 1.87, 1.0)
    out["snell_reversibility"] = float(np.max(np.abs(-t2 - v)))
    return out


PROPERTY_LIMITS = {
    "zernike_round_trip_waves": 1e-8,
    "parseval_relative": 1e-3,
    "laplace_relative": 1e-6,
    "fit_nbar_round_trip": 1e-6,
    "heating_slope_error": 1e-9,
    "snell_reversibility": 1e-12,
}


def check_properties(cfg, tol=1.0, seed=None):
    seed = int(cfg["run"]["seed"]) if seed is None else seed
    vals = property_suite(seed)
    fails = {k: v for k, v in vals.items() if not v < PROPERTY_LIMITS[k] * tol}
    return Check(11, "property suites", float(len(fails)), "0 failing properties", not fails,
                 {"values": vals, "limits": PROPERTY_LIMITS, "failing": sorted(fails)})


def enclosed_curves(cfg, seed: int, n_pupil: int = 512):
    """Ideal and degraded enclosed-fraction curves at the camera pixel pitch."""
    wave = cfg["wave"]
    pix = num(wave["camera_pixel_um"])
    sides = [int(s) for s in wave["enclosed_sides"]]
    _, pupil = nominal_pupil(cfg, n_pupil, 97)
    sub = int(wave.get("enclosed_subpixels", 12))
    frame = 2 * max(sides) + 9  # detector pixels across the simulated frame
    m = frame * sub

    def image(p):
        ff = wo.focal_field(p, pitch_um=pix / sub, m=m)
        return wo.IntensityImage(ff.intensity, ff.pitch_um)

    full = sides + [frame]
    ideal = wo.enclosed_fraction(image(pupil), full, pix)
    degraded = {}
    from .geometry import index_at, load_materials

    n_lens = index_at(load_materials()[cfg["optics"]["asphere"]["material"]], pupil.wavelength_nm)
    lc = num(wave["surface_correlation_mm"])
    for i, (name, rms) in enumerate((("rmsi curved", wave["rmsi_curved_nm"]),
                                     ("rmsi planar", wave["rmsi_planar_nm"]))):
        e = wo.surface_error_map(num(rms), lc, seed + i, pupil.n, pupil.pupil_radius_mm, pupil.extent)
        degraded[name] = wo.enclosed_fraction(image(pupil.with_phase(wo.surface_phase(e, n_lens, pupil.wavelength_nm))), full, pix)
    # a misaligned, aberrated stand-in for a measured image: 0.15 waves astigmatism + coma
    ab = wo.zernike_phase([0, 0, 0, 0, 0, 0.15, 0.1, 0], pupil.n, pupil.extent)
    degraded["astigmatism+coma"] = wo.enclosed_fraction(image(pupil.with_phase(ab)), full, pix)
    fixture = load_enclosed_fixture()
    return full, ideal, degraded, fixture


def load_enclosed_fixture():
    """Digitized measured curve, if one is shipped (none is by default)."""
    try:
        d = load_data("enclosed_fixture.toml")
    except FileNotFoundError:
        return None
    return {int(k): num(v) for k, v in d["points"].items()}


def check_enclosed(cfg, tol=1.0, seed=None):
    seed = int(cfg["run"]["seed"]) if seed is None else seed
    sides, ideal, degraded, fixture = enclosed_curves(cfg, seed)
    mono = bool(np.all(np.diff(ideal) >= -1e-12))
    reaches = abs(ideal[-1] - 1.0) < 1e-12
    dom = all(bool(np.all(ideal >= c - 1e-12)) for c in degraded.values())
    if fixture:
        dom = dom and all(ideal[sides.index(n)] >= v - 1e-12 for n, v in fixture.items() if n in sides)
    ok = mono and reaches and dom
    return Check(12, "enclosed fraction: monotone, reaches 1, dominates", float(ideal[0]),
                 "monotone, 1 at full frame, >= every comparison curve", ok,
                 {"sides": sides, "ideal": ideal.tolist(),
                  "comparisons": {k: v.tolist() for k, v in degraded.items()},
                  "digitized_fixture": fixture is not None})


CHECKS = [check_solid_angle, check_chain, check_fiber_coupling, check_diffraction_limit,
          check_rod_clipping, check_micromotion, check_sideband, check_mass_scaling, check_gate,
          check_rates, check_properties, check_enclosed]

SEEDED = {check_rod_clipping, check_properties, check_enclosed}


def run_all(cfg: dict | None = None, tolerance_scale: float | None = None, seed: int | None = None,
            only=None) -> list[Check]:
    cfg = default_config() if cfg is None else cfg
    tol = num(cfg["run"].get("tolerance_scale", 1.0)) if tolerance_scale is None else tolerance_scale
    rows = []
    for fn in CHECKS:
        t0 = time.perf_counter()
        if only is not None and CHECKS.index(fn) + 1 not in only:
            continue
        row = fn(cfg, tol, seed) if fn in SEEDED else fn(cfg, tol)
        row.seconds = time.perf_counter() - t0
        rows.append(row)
    return rows
