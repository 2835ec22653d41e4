"""Builders for the two-lens collection train from the run configuration."""

from __future__ import annotations

import math
from dataclasses import replace

from scipy.optimize import minimize_scalar

from .config import load_data, num
from .geometry import AsphericSurface, load_materials, surface_from_config
from .raytrace import Lens, OpticalAssembly, direction_spread, trace


def default_config() -> dict:
    return load_data("design.toml")


def _lens(cfg: dict, z_front: float, materials: dict, name: str) -> Lens:
    t = num(cfg["center_thickness_mm"], f"{name}.center_thickness_mm")
    front = surface_from_config(cfg.get("front", {}), z_front, f"{name}.front")
    back = surface_from_config(cfg.get("back", {}), z_front + t, f"{name}.back")
    return Lens(front, back, materials[cfg["material"]], name)


def window_lens(z_front: float, thickness: float, material, bow_radius: float = math.inf,
                semi_diameter: float = 19.0) -> Lens:
    """Vacuum window: plane-parallel plate, optionally bowed (both faces radius ``bow_radius``)."""
    front = AsphericSurface(z_front, bow_radius, semi_diameter=semi_diameter)
    back = AsphericSurface(z_front + thickness, bow_radius, semi_diameter=semi_diameter)
    return Lens(front, back, material, "window")


def asphere_only(cfg: dict | None = None, working_distance: float | None = None) -> OpticalAssembly:
    """In-vacuum asphere alone (collimating stage)."""
    cfg = default_config() if cfg is None else cfg
    optics = cfg["optics"]
    materials = load_materials()
    wd = num(optics["working_distance_mm"]) if working_distance is None else working_distance
    lens = _lens(optics["asphere"], wd, materials, "asphere")
    return OpticalAssembly([lens], wavelength_nm=num(optics["wavelength_nm"]))


def align_working_distance(cfg: dict | None = None, span: float = 0.2) -> float:
    """Object distance that best collimates the NA cone (minimum exit-ray spread)."""
    cfg = default_config() if cfg is None else cfg
    optics = cfg["optics"]
    wd0 = num(optics["working_distance_mm"])
    na = num(optics["collection_na"])

    def spread(wd):
        return direction_spread(trace(asphere_only(cfg, wd), na, "grid", 33))

    res = minimize_scalar(spread, bounds=(wd0 - span, wd0 + span), method="bounded",
                          options={"xatol": 1e-7})
    return float(res.x)


def design_assembly(cfg: dict | None = None, working_distance: float | None = None,
                   include_fiber_lens: bool = True, window_bow: float | None = None,
                   asphere_shift: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> OpticalAssembly:
    """Asphere, vacuum window and fiber-coupling lens as configured.

    ``asphere_shift`` = (dx, dy, dz) misaligns the in-vacuum lens after the
    working distance has been set.
    """
    cfg = default_config() if cfg is None else cfg
    optics = cfg["optics"]
    materials = load_materials()
    if working_distance is None:
        if optics.get("align_working_distance", False):
            working_distance = align_working_distance(cfg)
        else:
            working_distance = num(optics["working_distance_mm"])
    asphere = _lens(optics["asphere"], working_distance, materials, "asphere")
    dx, dy, dz = asphere_shift
    if dx or dy or dz:
        asphere = asphere.shifted(dz, dx, dy)
    elements = [asphere]
    z = asphere.back.vertex_z
    win = optics.get("window", {})
    if win.get("enabled", True):
        bow = num(win.get("bow_radius_mm", "inf")) if window_bow is None else window_bow
        z_w = z + num(win["gap_mm"])
        w = window_lens(z_w, num(win["thickness_mm"]), materials[win["material"]], bow,
                        num(win.get("semi_diameter_mm", 19.0)))
        elements.append(w)
        z = w.back.vertex_z
    if include_fiber_lens:
        fl = optics["fiber_lens"]
        elements.append(_lens(fl, z + num(fl["gap_mm"]), materials, "fiber lens"))
    asm = OpticalAssembly(elements, wavelength_nm=num(optics["wavelength_nm"]))
    asm.notes["working_distance_mm"] = working_distance
    return asm


def with_image_plane(assembly: OpticalAssembly, z: float) -> OpticalAssembly:
    return replace(assembly, image_z=z)
