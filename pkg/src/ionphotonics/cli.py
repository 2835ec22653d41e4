"""Command-line front end: ``ionphotonics <subcommand> [--config ...] [--seed ...] [--out ...]``.

Every subcommand writes a JSON report (sorted keys, no timestamps, so equal
inputs give byte-identical files) plus CSV series into ``--out``. Numbers in
reports carry a unit and a provenance tag: "computed", "published" or
"assumed".
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, deep_merge, load_toml, num, num_list

log = logging.getLogger("ionphotonics")


def q(value, unit: str, provenance: str = "computed") -> dict:
    return {"value": _plain(value), "unit": unit, "provenance": provenance}


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


class Run:
    """Resolved run settings shared by all subcommands."""

    def __init__(self, args):
        from .design import default_config

        cfg = default_config()
        if args.config:
            cfg = deep_merge(cfg, load_toml(args.config))
        if args.seed is not None:
            cfg["run"]["seed"] = int(args.seed)
        if args.tolerance_scale is not None:
            cfg["run"]["tolerance_scale"] = str(args.tolerance_scale)
        self.cfg = cfg
        self.seed = int(cfg["run"]["seed"])
        self.tol = num(cfg["run"]["tolerance_scale"], "run.tolerance_scale")
        self.out = Path(args.out)
        self.config_path = args.config
        self.plots: list[dict] = []

    def path(self, name: str) -> Path:
        p = (self.out / name).resolve()
        if self.out.resolve() not in p.parents:
            raise ValueError(f"refusing to write outside the output directory: {name}")
        return p

    def write_plots(self) -> Path | None:
        if not self.plots:
            return None
        return self.write_json("plots.json", {"plots": self.plots})

    def write_json(self, name: str, payload: dict) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        body = {"tool": "ionphotonics", "version": __version__, "seed": self.seed,
                "config": self.config_path or "<default>", **payload}
        p = self.path(name)
        p.write_text(json.dumps(_plain(body), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return p

    def write_csv(self, name: str, header, rows, plot: dict | None = None) -> Path:
        """Write a CSV series; ``plot`` (kind, x, y, labels) is queued for plots.json."""
        self.out.mkdir(parents=True, exist_ok=True)
        if plot is not None:
            self.plots.append({"csv": name, **plot})
        p = self.path(name)
        with p.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([f"# seed={self.seed}"])
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        return p


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _plot(kind: str, x: str, y: list, title: str, ylabel: str | None = None, **extra) -> dict:
    """Small renderer-agnostic description of how to draw a CSV series."""
    return {"kind": kind, "x": x, "y": list(y), "title": title, "xlabel": x,
            "ylabel": ylabel or (y[0] if len(y) == 1 else "value"), **extra}


# -- subcommands --------------------------------------------------------------------

def cmd_trace(run: Run, args) -> int:
    from .design import design_assembly
    from .raytrace import best_focus, direction_spread, spot_diagram, trace
    from . import waveoptics as wo

    cfg = run.cfg
    na = num(cfg["optics"]["collection_na"])
    asm = design_assembly(cfg)
    b = trace(asm, na, "grid", int(cfg["optics"]["ray_grid"]))
    z = best_focus(b)
    spot = spot_diagram(b, z)
    pupil = wo.build_pupil(b, 256)
    airy_um = 0.61 * b.wavelength_nm * 1e-3 / pupil.image_na
    opd = pupil.meta["ray_opd_mm"] / (b.wavelength_nm * 1e-6)
    run.write_csv("spot.csv", ["x_um", "y_um"], (spot.points - spot.centroid) * 1e3,
                  plot=_plot("scatter", "x_um", ["y_um"], "spot diagram at best focus", aspect="equal"))
    run.write_csv("opd.csv", ["pupil_x", "pupil_y", "opd_waves"],
                  np.column_stack([pupil.meta["ray_xy"], opd]),
                  plot=_plot("scatter", "pupil_x", ["pupil_y"], "ray OPD over the pupil", color="opd_waves",
                             aspect="equal"))
    coll = trace(design_assembly(cfg, include_fiber_lens=False), na, "grid", 33)
    run.write_json("trace.json", {
        "working_distance": q(asm.notes["working_distance_mm"], "mm"),
        "launched": q(b.launched, "rays"), "vignetted": q(b.vignetted_count, "rays"),
        "best_focus_z": q(z, "mm"), "rms_spot_radius": q(spot.rms_radius * 1e3, "um"),
        "airy_radius": q(airy_um, "um"), "image_na": q(pupil.image_na, "1"),
        "collimated_direction_spread": q(direction_spread(coll), "rad"),
        "opd_rms_after_focus": q(wo.rms_wavefront_waves(pupil, (1, 2, 3, 4)), "waves"),
        "wavelength": q(b.wavelength_nm, "nm", "published"),
    })
    print(f"rms spot {spot.rms_radius * 1e3:.3f} um (Airy radius {airy_um:.3f} um), "
          f"{b.vignetted_count}/{b.launched} vignetted")
    return 0


def _write_pgm(path: Path, img: np.ndarray):
    a = np.clip(img / img.max(), 0, 1)
    data = np.round(a * 65535).astype(">u2")
    with path.open("wb") as fh:
        fh.write(f"P5\n{a.shape[1]} {a.shape[0]}\n65535\n".encode())
        fh.write(data.tobytes())


def cmd_psf(run: Run, args) -> int:
    from . import waveoptics as wo
    from .reproduce import enclosed_curves, nominal_pupil

    cfg = run.cfg
    _, pupil = nominal_pupil(cfg, args.grid or int(cfg["wave"]["pupil_grid"]))
    image = wo.psf(pupil, samples_per_airy=num(cfg["wave"]["samples_per_airy"]))
    zfit = wo.zernike_fit(pupil, 15)
    sides, ideal, degraded, _ = enclosed_curves(cfg, run.seed)
    x = (np.arange(image.data.shape[0]) - image.data.shape[0] // 2) * image.pitch_um
    run.write_csv("psf_profile.csv", ["x_um", "intensity_per_pixel"],
                  zip(x, image.data[image.data.shape[0] // 2]),
                  plot=_plot("line", "x_um", ["intensity_per_pixel"], "PSF cut through the peak"))
    names = list(degraded)
    run.write_csv("enclosed.csv", ["N_pixels", "ideal"] + [n.replace(" ", "_") for n in names],
                  [[n, ideal[i]] + [degraded[k][i] for k in names] for i, n in enumerate(sides)],
                  plot=_plot("line", "N_pixels", ["ideal"] + [n.replace(" ", "_") for n in names],
                             "fraction of power in N x N pixels", ylabel="enclosed fraction"))
    if args.pgm:
        run.out.mkdir(parents=True, exist_ok=True)
        _write_pgm(run.path("psf.pgm"), image.data)
    run.write_json("psf.json", {
        "strehl": q(wo.strehl_ratio(pupil), "1"),
        "pitch": q(image.pitch_um, "um"),
        "image_power_fraction": q(image.total / pupil.power, "1"),
        "zernike_noll_waves": q(zfit.coefficients, "waves"),
        "zernike_residual_rms": q(zfit.residual_rms_waves, "waves"),
        "camera_pixel": q(num(cfg["wave"]["camera_pixel_um"]), "um", "published"),
        "surface_rmsi": {"curved": q(num(cfg["wave"]["rmsi_curved_nm"]), "nm", "published"),
                         "planar": q(num(cfg["wave"]["rmsi_planar_nm"]), "nm", "published"),
                         "correlation_length": q(num(cfg["wave"]["surface_correlation_mm"]), "mm", "assumed")},
        "enclosed_fraction": {"sides": sides, "ideal": q(ideal, "1"),
                              "comparisons": {k: q(v, "1") for k, v in degraded.items()}},
    })
    print(f"Strehl {wo.strehl_ratio(pupil):.4f}; enclosed in 3x3 pixels {ideal[sides.index(3)]:.3f}")
    return 0


def cmd_couple(run: Run, args) -> int:
    from . import fiber, waveoptics as wo
    from .design import align_working_distance, design_assembly
    from .raytrace import trace

    cfg = run.cfg
    na = num(cfg["optics"]["collection_na"])
    mode = fiber.gaussian_mode(num(cfg["fiber"]["na_eff"]), num(cfg["optics"]["wavelength_nm"]))
    wd = align_working_distance(cfg) if cfg["optics"].get("align_working_distance") else None
    rows = []
    results = {}
    sweeps = [("dx", s) for s in args.decenter_um] + [("dz", s) for s in args.defocus_um]
    for axis, s in sweeps:
        shift = (s * 1e-3, 0.0, 0.0) if axis == "dx" else (0.0, 0.0, s * 1e-3)
        b = trace(design_assembly(cfg, working_distance=wd, asphere_shift=shift), na, "grid", 97)
        p = wo.build_pupil(b, args.grid, cfg["wave"]["apodization"])
        r = fiber.optimal_coupling(p, mode)
        rows.append([axis, s, r.efficiency, r.defocus_um, r.offset_um[0], r.offset_um[1]])
        results[f"{axis}={s:g}um"] = r.efficiency
    run.write_csv("couple_sweep.csv", ["axis", "asphere_shift_um", "efficiency", "fiber_defocus_um",
                                       "fiber_dx_um", "fiber_dy_um"], rows,
                  plot=_plot("scatter", "asphere_shift_um", ["efficiency"], "coupling vs asphere shift",
                             group="axis"))
    pol = {k: fiber.polarization_loss(na, k) for k in ("pi", "sigma", "isotropic")}
    run.write_json("couple.json", {
        "mode_field_radius": q(mode.waist_um, "um"),
        "na_eff": q(mode.na_eff, "1", "published"),
        "apodization": cfg["wave"]["apodization"],
        "sweep_efficiency": q(results, "1"),
        "polarization_multiplier": q(pol, "1"),
        "dipole_config": cfg["fiber"]["dipole_config"],
    })
    for r in rows:
        print(f"{r[0]} {r[1]:+8.1f} um  eta = {r[2]:.4f}")
    return 0


def cmd_clip(run: Run, args) -> int:
    from . import trap as tp

    cfg = run.cfg
    geom = tp.geometry_from_config(cfg)
    na = num(cfg["clipping"]["na"])
    samples = int(args.samples or cfg["clipping"]["samples"])
    rows, rep = [], {}
    for orient in ("normal-to-1mm-pair", "along-1mm-pair"):
        g = replace(geom, collection_axis=orient)
        r = tp.rod_clipping(g, na, samples, run.seed)
        exact = tp.clipping_fraction_exact(g, na)
        rows.append([orient, r.blocked_fraction, r.standard_error, exact])
        rep[orient] = {"blocked": q(r.blocked_fraction, "1"), "stderr": q(r.standard_error, "1"),
                       "quadrature": q(exact, "1")}
    run.write_csv("clip.csv", ["orientation", "blocked_fraction", "standard_error", "quadrature"], rows,
                  plot=_plot("bar", "orientation", ["blocked_fraction", "quadrature"], "rod clipping",
                             error="standard_error"))
    run.write_json("clip.json", {"samples": samples, "na": q(na, "1", "published"),
                                 "configured_orientation": geom.collection_axis, "results": rep,
                                 "rod_diameter": q(geom.rod_diameter_mm, "mm", "published")})
    for r in rows:
        print(f"{r[0]:>20s}: {r[1]:.5f} +- {r[2]:.5f} (quadrature {r[3]:.5f})")
    return 0


def cmd_trap(run: Run, args) -> int:
    from . import trap as tp

    cfg = run.cfg
    geom = tp.geometry_from_config(cfg)
    drive = tp.drive_from_config(cfg)
    measured = [330.0, 705.0, 888.0]
    fit = tp.fit_geometry_factors(measured, drive, geom, tp.BA138)
    fitted = replace(drive, kappa_r=fit.kappa_r, kappa_z=fit.kappa_z)
    out = {}
    for ion in (tp.BA138, tp.YB171):
        mp = tp.mathieu_params(fitted, geom, ion)
        out[ion.name] = {"a": q(mp.a, "1", "assumed"), "q": q(mp.q, "1", "assumed"),
                         "secular_xyz": q(tp.secular_frequencies(mp), "kHz", "assumed")}
    pm = tp.potential_map(geom, fitted, tp.BA138, args.half_width, args.points)
    X, Y = np.meshgrid(pm.x_mm, pm.y_mm, indexing="xy")
    run.write_csv("potential_map.csv", ["x_mm", "y_mm", "static_V", "pseudo_eV"],
                  np.column_stack([X.ravel(), Y.ravel(), pm.static_V.ravel(), pm.pseudo_eV.ravel()]),
                  plot=_plot("heatmap", "x_mm", ["y_mm"], "radial pseudopotential", color="pseudo_eV",
                             aspect="equal"))
    run.write_json("trap.json", {
        "r0": q(geom.r0_mm, "mm"), "ion_rod_surface_distance": q(geom.ion_rod_surface_distance_mm, "mm"),
        "assumed_rf_frequency": q(drive.rf_frequency_MHz, "MHz", "assumed"),
        "fit": {"kappa_r": q(fit.kappa_r, "1"), "kappa_z": q(fit.kappa_z, "1"),
                "residuals": q(fit.residuals_kHz, "kHz"), "measured": q(measured, "kHz", "published")},
        "modes": out,
        "yb_axial_mass_scaled": q(tp.mass_scaled_axial(330.0, 138, 171), "kHz"),
        "potential_map_header": {
            "units": pm.meta["units"],
            "half_width": q(pm.meta["grid"]["half_width_mm"], "mm", "assumed"),
            "points_per_axis": pm.meta["grid"]["n"],
            "z": q(pm.meta["grid"]["z_mm"], "mm", "assumed"),
            "rf_frequency": q(pm.meta["assumed_rf_frequency_MHz"], "MHz", "assumed"),
            "kappa_r_geometric": q(pm.meta["kappa_r_geometric"], "1"),
            "surface_fit_rms": q(pm.meta["surface_fit_rms_V"], "V"),
        },
    })
    print(f"kappa_r = {fit.kappa_r:.4f}, kappa_z = {fit.kappa_z:.5f} at assumed "
          f"{drive.rf_frequency_MHz:g} MHz; residuals {np.round(fit.residuals_kHz, 2)} kHz")
    return 0


def cmd_micromotion(run: Run, args) -> int:
    from . import micromotion as mm

    c = run.cfg["micromotion"]
    beta = mm.beta_from_ratio(args.ratio)
    w0 = mm.pi_time_to_rabi(num(c["carrier_pi_time_us"]))
    t = num(c["probe_time_us"])
    det = np.linspace(-args.span_kHz, args.span_kHz, args.points)
    p = mm.sideband_spectrum(beta, w0, t, det)
    k = mm.wavevector(num(c["probe_wavelength_nm"]))
    disp = mm.beta_to_displacement(beta, num(c["q_radial"]), k, num(c["beam_projection"]))
    run.write_csv("sideband_spectrum.csv", ["detuning_kHz", "probability"], zip(det, p),
                  plot=_plot("line", "detuning_kHz", ["probability"], "micromotion sideband spectrum"))
    run.write_json("micromotion.json", {
        "ratio": q(args.ratio, "1"), "beta": q(beta, "1"),
        "carrier_pi_time": q(num(c["carrier_pi_time_us"]), "us", "published"),
        "probe_time": q(t, "us", "published"),
        "peak_excitation": q(float(mm.sideband_spectrum(beta, w0, t, [0.0])[0]), "1"),
        "implied_ion_displacement": q(disp, "um", "assumed"),
        "q_radial": q(num(c["q_radial"]), "1", "assumed"),
        "beam_projection": q(num(c["beam_projection"]), "1", "assumed"),
    })
    print(f"beta = {beta:.6f}; implied RF-null displacement {disp:.3f} um (assumed q, projection)")
    return 0


def _read_curves(path: Path):
    data: dict[float, list] = {}
    with path.open(encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    head = [h.strip() for h in rows[0]]
    try:
        i_d, i_t, i_p = head.index("delay_ms"), head.index("time_us"), head.index("probability")
    except ValueError:
        raise ConfigError(f"{path}: expected columns delay_ms,time_us,probability") from None
    for r in rows[1:]:
        data.setdefault(float(r[i_d]), []).append((float(r[i_t]), float(r[i_p])))
    return {d: np.array(sorted(v)).T for d, v in sorted(data.items())}


def cmd_thermometry(run: Run, args) -> int:
    from . import micromotion as mm, thermometry as th

    c = run.cfg["thermometry"]
    eta = th.lamb_dicke(num(c["probe_wavelength_nm"]), num(c["mass_u"]), num(c["axial_frequency_kHz"]),
                        num(c["beam_projection"]))
    w0 = mm.pi_time_to_rabi(args.pi_time_us)
    spec_eta = num_list(c.get("spectator_eta", []), "thermometry.spectator_eta")
    spec_nbar = num_list(c.get("spectator_nbar", []), "thermometry.spectator_nbar")
    if len(spec_eta) != len(spec_nbar):
        raise ConfigError("thermometry.spectator_eta and spectator_nbar must have equal length")
    spectators = list(zip(spec_eta, spec_nbar))
    # the regime check is reported in the JSON instead of warning per curve
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", th.LambDickeWarning)
        if args.input:
            curves = _read_curves(Path(args.input))
            source = "input"
        else:
            rng = np.random.default_rng(run.seed)
            t = np.linspace(0, 8 * args.pi_time_us, 80)
            curves = {}
            for d in (0.0, 5.0, 10.0, 20.0, 40.0):
                nb = args.nbar0 + args.rate * d * 1e-3
                model = (th.carrier_decay_modes(w0, [eta] + spec_eta, [nb] + spec_nbar, t) if spectators
                         else th.carrier_decay(w0, eta, nb, t))
                p = model + rng.normal(0, args.noise, t.size)
                curves[d] = np.vstack([t, np.clip(p, 0, 1)])
            source = "synthetic"
        rows, nbars = [], []
        for d, (t, p) in curves.items():
            f = th.fit_nbar(t, p, eta, w0, spectators=spectators)
            nbars.append(f.nbar)
            rows.append([d, f.nbar, f.omega0, f.residual_rms])
    hf = th.heating_rate(list(curves), nbars)
    gate_us = num(c["gate_time_us"])
    run.write_csv("nbar_fits.csv", ["delay_ms", "nbar", "omega0_rad_s", "residual_rms"], rows,
                  plot=_plot("scatter", "delay_ms", ["nbar"], "mean phonon number vs delay",
                             fit_line={"report": "thermometry.json", "slope": "heating_rate"}))
    run.write_json("thermometry.json", {
        "source": source, "eta": q(eta, "1"),
        "spectator_modes": [{"eta": q(e, "1", "assumed"), "nbar": q(n, "quanta", "assumed")}
                            for e, n in spectators],
        "lamb_dicke_check_max": q(eta**2 * (max(nbars) + 1), "1"),
        "heating_rate": q(hf.rate, "quanta/s"), "heating_rate_stderr": q(hf.rate_stderr, "quanta/s"),
        "gate_time": q(gate_us, "us", "published"),
        "gate_infidelity": q(th.gate_infidelity(hf.rate, gate_us), "1"),
        "gate_infidelity_uncertainty": q(th.gate_infidelity_uncertainty(hf.rate_stderr, gate_us), "1"),
        "synthetic_truth": None if args.input else {"rate": q(args.rate, "quanta/s", "assumed"),
                                                    "nbar0": q(args.nbar0, "quanta", "assumed"),
                                                    "noise": q(args.noise, "1", "assumed")},
    })
    print(f"eta = {eta:.4f}; heating rate {hf.rate:.1f} +- {hf.rate_stderr:.1f} quanta/s; "
          f"gate infidelity {th.gate_infidelity(hf.rate, gate_us):.4f}")
    return 0


def cmd_budget(run: Run, args) -> int:
    from . import budget

    scn_name = args.scenario or run.cfg["budget"]["scenario"]
    scn = budget.load_scenario(None if scn_name == "rate_scenario.toml" else scn_name)
    res = budget.run_scenario(scn)
    alt = budget.run_scenario(scn, "three-node" if res.assumed["topology"] == "two-node" else "two-node")
    factors = [budget.factor_from_config(f) for f in scn["factors"]]
    prov = {"measured": "published"}
    table = [[f.name, f.value, f.relative_uncertainty * f.value, prov.get(f.provenance, f.provenance)]
             for f in factors]
    run.write_csv("budget_chain.csv", ["factor", "value", "uncertainty", "provenance"], table,
                  plot=_plot("bar", "factor", ["value"], "per-side efficiency chain", error="uncertainty"))
    run.write_json("budget.json", {
        "scenario": res.name, "reconstructed": bool(scn.get("scenario", {}).get("reconstructed", False)),
        "factors": {f.name: q(f.value, "1", prov.get(f.provenance, f.provenance)) for f in factors},
        "per_side": q(res.per_side, "1"), "per_side_uncertainty": q(res.per_side_uncertainty, "1"),
        "two_sided": q(budget.total_two_sided((res.per_side, res.per_side)), "1"),
        "baseline_attempt_rate": q(res.baseline_attempt_rate, "1/s"),
        "rate_ratio": q(res.ratio, "1"), "rate_ratio_other_topology": q(alt.ratio, "1"),
        "efficiency_ratio_squared": q(res.efficiency_ratio_squared, "1"),
        "direction_factor": q(res.direction_factor, "1", "assumed"),
        "assumed": {k: (q(v, "1", "assumed") if isinstance(v, float) else v) for k, v in res.assumed.items()},
    })
    w = max(len(r[0]) for r in table)
    for r in table:
        print(f"{r[0]:<{w}}  {r[1]:.4f} +- {r[2]:.4f}  [{r[3]}]")
    print(f"{'per side':<{w}}  {res.per_side:.4f} +- {res.per_side_uncertainty:.4f}")
    for k, v in res.assumed.items():
        print(f"assumed {k}: {v}")
    print(f"rate ratio ({res.assumed['topology']}): {res.ratio:.3f} = "
          f"{res.efficiency_ratio_squared:.3f} (efficiency^2) x {res.direction_factor:g} (directions)")
    return 0


def cmd_reproduce(run: Run, args) -> int:
    from .reproduce import run_all

    only = set(args.only) if args.only else None
    rows = run_all(run.cfg, run.tol, run.seed, only)
    for r in rows:
        print(r.line())
    run.write_json("acceptance.json", {"tolerance_scale": run.tol,
                                       "checks": [{k: v for k, v in r.as_dict().items() if k != "seconds"}
                                                  for r in rows]})
    run.write_csv("acceptance.csv", ["id", "name", "value", "target", "passed"],
                  [[r.id, r.name, r.value, r.target, r.passed] for r in rows])
    failed = [r.id for r in rows if not r.passed]
    print(f"{len(rows) - len(failed)}/{len(rows)} passed" + (f"; failing: {failed}" if failed else ""))
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file merged over the shipped defaults")
    common.add_argument("--seed", type=int, help="random seed (default from config)")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--tolerance-scale", type=float, help="multiply acceptance tolerances")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="ionphotonics", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("trace", parents=[common], help="spot diagram and OPD of the collection train")
    p = sub.add_parser("psf", parents=[common], help="PSF, Zernikes and enclosed fractions")
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--pgm", action="store_true", help="also write a 16-bit PGM of the PSF")
    p = sub.add_parser("couple", parents=[common], help="fiber coupling vs asphere misalignment")
    p.add_argument("--decenter-um", type=float, nargs="*", default=[0, 1, 2, 4, 6, 8, 10])
    p.add_argument("--defocus-um", type=float, nargs="*", default=[-10, -5, -2, 2, 5, 10])
    p.add_argument("--grid", type=int, default=256)
    p = sub.add_parser("clip", parents=[common], help="rod shadowing of the collection cone")
    p.add_argument("--samples", type=int, default=None)
    p = sub.add_parser("trap", parents=[common], help="Mathieu parameters, frequencies, potential map")
    p.add_argument("--half-width", type=float, default=0.3, help="map half width (mm)")
    p.add_argument("--points", type=int, default=61)
    p = sub.add_parser("micromotion", parents=[common], help="modulation index and sideband spectrum")
    p.add_argument("--ratio", type=float, default=0.011, help="sideband/carrier Rabi frequency ratio")
    p.add_argument("--span-kHz", type=float, default=5.0)
    p.add_argument("--points", type=int, default=401)
    p = sub.add_parser("thermometry", parents=[common], help="n-bar fits and heating rate")
    p.add_argument("--input", help="CSV with delay_ms,time_us,probability (default: synthetic data)")
    p.add_argument("--pi-time-us", type=float, default=10.0)
    p.add_argument("--rate", type=float, default=285.0, help="synthetic heating rate (quanta/s)")
    p.add_argument("--nbar0", type=float, default=5.0)
    p.add_argument("--noise", type=float, default=0.01)
    p = sub.add_parser("budget", parents=[common], help="efficiency chain and rate scenario")
    p.add_argument("--scenario", help="scenario TOML (default: shipped scenario)")
    p = sub.add_parser("reproduce-paper", parents=[common], help="run the acceptance suite")
    p.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    return ap


COMMANDS = {"trace": cmd_trace, "psf": cmd_psf, "couple": cmd_couple, "clip": cmd_clip, "trap": cmd_trap,
            "micromotion": cmd_micromotion, "thermometry": cmd_thermometry, "budget": cmd_budget,
            "reproduce-paper": cmd_reproduce}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = Run(args)
        code = COMMANDS[args.command](run, args)
        run.write_plots()
        return code
    except ConfigError as exc:
        print(f"ionphotonics: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"ionphotonics: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
