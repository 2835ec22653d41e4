"""Surface geometry, glass dispersion and vector refraction.

Conventions used throughout the package:

* light travels towards +z, lengths are in mm, wavelengths in nm;
* a surface radius ``R > 0`` puts the centre of curvature downstream of the
  vertex, ``R = inf`` is a plane;
* the sag is the normalised even asphere

      z(r) / R = rho^2 / (1 + sqrt(1 - (1 + k) rho^2)) + sum_n A_n rho^n,
      rho = r / R,

  so the polynomial coefficients are dimensionless and the whole right-hand
  side is scaled by R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, load_data, num, num_list


class DomainError(ValueError):
    """The conic square root is negative at the requested radius."""


class ApertureError(ValueError):
    """The requested radius lies outside the clear aperture."""


class TotalInternalReflection(ValueError):
    """Refraction is impossible: n1 sin(theta1) > n2."""


class WavelengthRangeError(ValueError):
    pass


@dataclass(frozen=True)
class AsphericSurface:
    vertex_z: float
    radius: float = math.inf
    conic: float = 0.0
    coeffs: tuple[tuple[int, float], ...] = ()
    semi_diameter: float = 12.5
    decenter: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for order, _ in self.coeffs:
            if order < 4 or order % 2:
                raise ValueError(f"polynomial order {order} is not an even order >= 4")
        if self.radius == 0:
            raise ValueError("radius must be nonzero (use math.inf for a plane)")
        if self.semi_diameter <= 0:
            raise ValueError("semi_diameter must be positive")

    @property
    def is_plane(self) -> bool:
        return math.isinf(self.radius)

    def shifted(self, dz: float = 0.0, dx: float = 0.0, dy: float = 0.0) -> "AsphericSurface":
        return AsphericSurface(
            self.vertex_z + dz, self.radius, self.conic, self.coeffs, self.semi_diameter,
            (self.decenter[0] + dx, self.decenter[1] + dy),
        )

    def max_sag_abs(self) -> float:
        r = np.linspace(0.0, self.semi_diameter, 257)
        return float(np.max(np.abs(_sag_unchecked(self, r))))


def _conic_root_arg(surface: AsphericSurface, rho):
    return 1.0 - (1.0 + surface.conic) * rho * rho


def _sag_unchecked(surface: AsphericSurface, r):
    r = np.asarray(r, dtype=float)
    if surface.is_plane:
        return np.zeros_like(r)
    R = surface.radius
    rho = r / R
    arg = np.maximum(_conic_root_arg(surface, rho), 0.0)
    z = rho * rho / (1.0 + np.sqrt(arg))
    for order, a in surface.coeffs:
        z = z + a * rho**order
    return R * z


def _slope_unchecked(surface: AsphericSurface, r):
    r = np.asarray(r, dtype=float)
    if surface.is_plane:
        return np.zeros_like(r)
    rho = r / surface.radius
    arg = np.maximum(_conic_root_arg(surface, rho), 1e-300)
    # d(R f(rho))/dr = f'(rho)
    slope = rho / np.sqrt(arg)
    for order, a in surface.coeffs:
        slope = slope + order * a * rho ** (order - 1)
    return slope


def _check_domain(surface: AsphericSurface, r, check_aperture: bool = True):
    r = np.abs(np.asarray(r, dtype=float))
    if check_aperture and np.any(r > surface.semi_diameter * (1 + 1e-12)):
        raise ApertureError(
            f"r = {np.max(r):.6g} mm exceeds clear semi-diameter {surface.semi_diameter:g} mm"
        )
    if not surface.is_plane:
        rho = r / surface.radius
        if np.any(_conic_root_arg(surface, rho) < 0):
            raise DomainError("(1 + conic) (r/R)^2 > 1: sag is not real at this radius")
    return r


def sag(surface: AsphericSurface, r, check_aperture: bool = True):
    """Axial sag z(r) in mm measured from the vertex (even in r)."""
    r = _check_domain(surface, r, check_aperture)
    out = _sag_unchecked(surface, r)
    return float(out) if out.ndim == 0 else out


def sag_slope(surface: AsphericSurface, r, check_aperture: bool = True):
    """Analytic dz/dr, signed so that sag_slope(-r) = -sag_slope(r)."""
    r = np.asarray(r, dtype=float)
    sign = np.sign(r)
    _check_domain(surface, r, check_aperture)
    out = sign * _slope_unchecked(surface, np.abs(r))
    return float(out) if out.ndim == 0 else out


def surface_normal(surface: AsphericSurface, x, y=0.0, check_aperture: bool = True):
    """Unit normal (pointing towards +z) at transverse position (x, y).

    Position is relative to the surface axis; arrays broadcast and the result
    has a trailing dimension of 3.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x, y)
    _check_domain(surface, r, check_aperture)
    return _normal_unchecked(surface, x, y)


def _normal_unchecked(surface: AsphericSurface, x, y):
    r = np.hypot(x, y)
    s = _slope_unchecked(surface, r)
    with np.errstate(invalid="ignore", divide="ignore"):
        cx = np.where(r > 0, x / np.where(r > 0, r, 1.0), 0.0)
        cy = np.where(r > 0, y / np.where(r > 0, r, 1.0), 0.0)
    n = np.stack(np.broadcast_arrays(-s * cx, -s * cy, np.ones_like(s)), axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def refract_many(d, n, n1, n2):
    """Vectorised Snell refraction.

    Returns ``(t, ok)``; rows where total internal reflection occurs have
    ``ok == False`` and ``t`` filled with NaN. The normal may point either way.
    """
    d = np.atleast_2d(np.asarray(d, dtype=float))
    n = np.atleast_2d(np.asarray(n, dtype=float))
    cos_i = np.sum(d * n, axis=-1)
    flip = cos_i < 0
    n = np.where(flip[:, None], -n, n)
    cos_i = np.abs(cos_i)
    mu = n1 / n2
    k = 1.0 - mu * mu * (1.0 - cos_i * cos_i)
    ok = k >= 0
    cos_t = np.sqrt(np.where(ok, k, 0.0))
    t = mu * d + (cos_t - mu * cos_i)[:, None] * n
    t = t / np.linalg.norm(t, axis=-1, keepdims=True)
    t[~ok] = np.nan
    return t, ok


def refract(incident, normal, n1: float, n2: float) -> np.ndarray:
    """Refract one unit direction through an interface from index n1 to n2."""
    t, ok = refract_many(incident, normal, n1, n2)
    if not ok[0]:
        raise TotalInternalReflection(f"total internal reflection (n1={n1}, n2={n2})")
    return t[0]


@dataclass(frozen=True)
class Material:
    name: str
    wavelengths_nm: tuple[float, ...]
    indices: tuple[float, ...]
    interpolation: str = field(default="linear")

    def __post_init__(self):
        if len(self.wavelengths_nm) != len(self.indices) or not self.indices:
            raise ValueError(f"{self.name}: wavelength and index tables must match and be nonempty")
        if any(b <= a for a, b in zip(self.wavelengths_nm, self.wavelengths_nm[1:])):
            raise ValueError(f"{self.name}: wavelengths must be strictly increasing")
        if any(n < 1.0 for n in self.indices):
            raise ValueError(f"{self.name}: refractive indices must be >= 1")

    @classmethod
    def constant(cls, name: str, index: float, wavelength_nm: float = 493.5) -> "Material":
        return cls(name, (wavelength_nm,), (index,))


def index_at(material: Material, wavelength_nm: float) -> float:
    wl = material.wavelengths_nm
    if len(wl) == 1:
        if not math.isclose(wavelength_nm, wl[0], rel_tol=0, abs_tol=1e-9):
            raise WavelengthRangeError(f"{material.name}: only tabulated at {wl[0]} nm")
        return material.indices[0]
    if wavelength_nm < wl[0] or wavelength_nm > wl[-1]:
        raise WavelengthRangeError(
            f"{material.name}: {wavelength_nm} nm outside table span {wl[0]}-{wl[-1]} nm"
        )
    return float(np.interp(wavelength_nm, wl, material.indices))


VACUUM = Material("vacuum", (200.0, 2000.0), (1.0, 1.0))


def load_materials(table: dict | None = None) -> dict[str, Material]:
    table = load_data("materials.toml") if table is None else table
    out = {}
    for name, entry in table.items():
        try:
            wl = num_list(entry["wavelength_nm"], f"{name}.wavelength_nm")
            idx = num_list(entry["index"], f"{name}.index")
        except KeyError as exc:
            raise ConfigError(f"material {name}: missing field {exc}") from None
        out[name] = Material(name, tuple(wl), tuple(idx))
    return out


def surface_from_config(entry: dict, vertex_z: float, where: str = "surface") -> AsphericSurface:
    radius = entry.get("radius_mm", "inf")
    radius = math.inf if str(radius).strip().lower() in ("inf", "infinity", "plane") else num(radius, f"{where}.radius_mm")
    coeffs = tuple(
        (int(k.lstrip("Aa")), num(v, f"{where}.coeffs.{k}"))
        for k, v in sorted(entry.get("coeffs", {}).items(), key=lambda kv: int(kv[0].lstrip("Aa")))
    )
    return AsphericSurface(
        vertex_z=vertex_z,
        radius=radius,
        conic=num(entry.get("conic", 0.0), f"{where}.conic"),
        coeffs=coeffs,
        semi_diameter=num(entry.get("semi_diameter_mm", 12.5), f"{where}.semi_diameter_mm"),
    )
