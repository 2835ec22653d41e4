"""Sequential, vectorised ray tracing through rotationally symmetric elements.

Rays are carried as arrays (one row per ray) so a full pupil sampling is
traced in a handful of numpy passes. Rays that miss an aperture or hit total
internal reflection are flagged dead, never dropped, which keeps the
``alive + vignetted == launched`` bookkeeping exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    VACUUM,
    AsphericSurface,
    Material,
    _normal_unchecked,
    _sag_unchecked,
    _slope_unchecked,
    index_at,
    refract_many,
)

INTERSECT_TOL = 1e-12  # mm, axial residual accepted from Newton


class InsufficientSamplingError(ValueError):
    pass


@dataclass
class Rays:
    """A batch of rays: positions/directions are (N, 3) arrays."""

    pos: np.ndarray
    dir: np.ndarray
    opl: np.ndarray
    weight: np.ndarray
    alive: np.ndarray

    @classmethod
    def from_directions(cls, origin, directions, weight=None) -> "Rays":
        d = np.atleast_2d(np.asarray(directions, dtype=float))
        d = d / np.linalg.norm(d, axis=1, keepdims=True)
        n = len(d)
        pos = np.broadcast_to(np.asarray(origin, dtype=float), (n, 3)).copy()
        w = np.ones(n) if weight is None else np.asarray(weight, dtype=float).copy()
        return cls(pos, d, np.zeros(n), w, np.ones(n, dtype=bool))

    def __len__(self) -> int:
        return len(self.opl)

    def copy(self) -> "Rays":
        return Rays(self.pos.copy(), self.dir.copy(), self.opl.copy(), self.weight.copy(), self.alive.copy())


# -- elements -------------------------------------------------------------------

@dataclass(frozen=True)
class Lens:
    """Glass between two surfaces; surrounding medium is set by the assembly."""

    front: AsphericSurface
    back: AsphericSurface
    material: Material
    name: str = "lens"

    @property
    def z_start(self) -> float:
        return self.front.vertex_z - max(0.0, -self._min_sag(self.front))

    @property
    def z_end(self) -> float:
        return self.back.vertex_z + max(0.0, self._max_sag(self.back))

    @staticmethod
    def _min_sag(s):
        r = np.linspace(0, s.semi_diameter, 129)
        return float(np.min(_sag_unchecked(s, r)))

    @staticmethod
    def _max_sag(s):
        r = np.linspace(0, s.semi_diameter, 129)
        return float(np.max(_sag_unchecked(s, r)))

    @property
    def center_thickness(self) -> float:
        return self.back.vertex_z - self.front.vertex_z

    def shifted(self, dz=0.0, dx=0.0, dy=0.0) -> "Lens":
        return replace(self, front=self.front.shifted(dz, dx, dy), back=self.back.shifted(dz, dx, dy))


@dataclass(frozen=True)
class IdealLens:
    """Aberration-free thin lens: any parallel bundle meets at one focal-plane point."""

    z: float
    focal_length: float
    semi_diameter: float = 50.0
    name: str = "ideal lens"

    def __post_init__(self):
        if self.focal_length <= 0:
            raise ValueError("ideal lens focal length must be positive")

    @property
    def z_start(self) -> float:
        return self.z

    z_end = z_start

    def shifted(self, dz=0.0, dx=0.0, dy=0.0) -> "IdealLens":
        return replace(self, z=self.z + dz)


@dataclass
class OpticalAssembly:
    elements: list
    object_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    wavelength_nm: float = 493.5
    image_z: float | None = None
    medium: Material = VACUUM
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        last = -math.inf
        for el in self.elements:
            if isinstance(el, Lens) and el.front.vertex_z >= el.back.vertex_z:
                raise ValueError(f"{el.name}: back vertex must lie after the front vertex")
            if el.z_start <= last:
                raise ValueError(f"{el.name}: overlaps the preceding element")
            last = el.z_end

    @property
    def working_distance(self) -> float:
        first = self.elements[0]
        z = first.front.vertex_z if isinstance(first, Lens) else first.z
        return z - self.object_position[2]


@dataclass
class TracedBundle:
    rays: Rays
    launch_dir: np.ndarray
    pupil_xy: np.ndarray  # launch direction sines normalised by the cone NA
    launched: int
    wavelength_nm: float
    na: float

    @property
    def alive(self) -> np.ndarray:
        return self.rays.alive

    @property
    def vignetted_count(self) -> int:
        return int(np.count_nonzero(~self.rays.alive))

    @property
    def launch_theta(self) -> np.ndarray:
        return np.arccos(np.clip(self.launch_dir[:, 2], -1.0, 1.0))


# -- sources ----------------------------------------------------------------------

def cone_grid(na: float, n_across: int, edge_ring: bool = True):
    """Directions on a Cartesian grid of direction sines filling |s| <= na.

    Returns ``(directions, pupil_xy)`` where pupil_xy = s / na. A ring of rays
    exactly on the rim is appended so interpolation reaches the pupil edge.
    """
    if not 0 < na < 1:
        raise ValueError("na must be in (0, 1)")
    u = np.linspace(-1.0, 1.0, n_across)
    px, py = np.meshgrid(u, u, indexing="xy")
    keep = px**2 + py**2 <= 1.0 - 1e-12
    px, py = px[keep], py[keep]
    if edge_ring:
        phi = np.linspace(0, 2 * np.pi, 4 * n_across, endpoint=False)
        px = np.concatenate([px, np.cos(phi)])
        py = np.concatenate([py, np.sin(phi)])
    sx, sy = na * px, na * py
    d = np.stack([sx, sy, np.sqrt(1 - sx**2 - sy**2)], axis=1)
    return d, np.stack([px, py], axis=1)


def cone_random(na: float, n: int, rng: np.random.Generator):
    """Directions uniform in solid angle inside the cone of half-angle asin(na)."""
    if not 0 < na < 1:
        raise ValueError("na must be in (0, 1)")
    cos_max = math.sqrt(1 - na * na)
    c = rng.uniform(cos_max, 1.0, n)
    phi = rng.uniform(0.0, 2 * np.pi, n)
    s = np.sqrt(1 - c * c)
    d = np.stack([s * np.cos(phi), s * np.sin(phi), c], axis=1)
    return d, d[:, :2] / na


def cone_fan(na: float, n: int, azimuth: float = 0.0):
    s = np.linspace(-na, na, n)
    d = np.stack([s * math.cos(azimuth), s * math.sin(azimuth), np.sqrt(1 - s * s)], axis=1)
    return d, d[:, :2] / na


# -- intersection -------------------------------------------------------------------

def _local_xy(surface: AsphericSurface, p):
    return p[:, 0] - surface.decenter[0], p[:, 1] - surface.decenter[1]


def intersect(rays: Rays, surface: AsphericSurface):
    """First intersection of each live ray with ``surface``.

    Returns ``(points, r, hit)``: points (N, 3), radial distance from the
    surface axis, and a mask of rays that met the surface inside its clear
    aperture. Newton iteration starts at the vertex-plane crossing; rays that
    do not converge fall back to bisection.
    """
    p, d = rays.pos, rays.dir
    n = len(rays)
    live = rays.alive & (d[:, 2] > 0)
    t = np.full(n, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (surface.vertex_z - p[:, 2]) / d[:, 2]
    if surface.is_plane:
        t = np.where(live, t0, np.nan)
    else:
        t = t0.copy()
        done = ~live
        for _ in range(60):
            idx = ~done
            if not idx.any():
                break
            g, dg = _residual(surface, p[idx], d[idx], t[idx])
            step = g / dg
            t[idx] -= step
            g_new, _ = _residual(surface, p[idx], d[idx], t[idx])
            conv = np.abs(g_new) < INTERSECT_TOL
            sub = np.flatnonzero(idx)
            done[sub[conv]] = True
            bad = ~np.isfinite(t[idx])
            done[sub[bad]] = True
        failed = live & (~done | ~np.isfinite(t) | (np.abs(_residual(surface, p, d, t)[0]) >= INTERSECT_TOL))
        if failed.any():
            t[failed] = _bisect(surface, p[failed], d[failed])
    pts = p + t[:, None] * d
    x, y = _local_xy(surface, pts)
    r = np.hypot(x, y)
    hit = live & np.isfinite(t) & (t >= -1e-9) & (r <= surface.semi_diameter)
    return pts, r, hit


def _residual(surface, p, d, t):
    q = p + t[:, None] * d
    x, y = _local_xy(surface, q)
    r = np.hypot(x, y)
    g = q[:, 2] - surface.vertex_z - _sag_unchecked(surface, r)
    with np.errstate(invalid="ignore", divide="ignore"):
        drdt = np.where(r > 0, (x * d[:, 0] + y * d[:, 1]) / np.where(r > 0, r, 1.0), 0.0)
    dg = d[:, 2] - _slope_unchecked(surface, r) * drdt
    return g, dg


def _bisect(surface, p, d, iters: int = 200):
    span = surface.max_sag_abs() + 1.0
    lo = (surface.vertex_z - span - p[:, 2]) / d[:, 2]
    hi = (surface.vertex_z + span - p[:, 2]) / d[:, 2]
    lo = np.maximum(lo, 0.0)
    glo = _residual(surface, p, d, lo)[0]
    ghi = _residual(surface, p, d, hi)[0]
    valid = (glo <= 0) & (ghi >= 0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        gm = _residual(surface, p, d, mid)[0]
        left = gm > 0
        hi = np.where(left, mid, hi)
        lo = np.where(left, lo, mid)
        if np.all(hi - lo < 1e-13):
            break
    out = 0.5 * (lo + hi)
    out[~valid] = np.nan
    return out


# -- tracing --------------------------------------------------------------------------

def _surface_step(rays: Rays, surface: AsphericSurface, n1: float, n2: float) -> Rays:
    pts, _, hit = intersect(rays, surface)
    seg = np.linalg.norm(pts - rays.pos, axis=1)
    alive = rays.alive & hit
    out = rays.copy()
    out.pos[alive] = pts[alive]
    out.opl[alive] += n1 * seg[alive]
    x, y = _local_xy(surface, pts[alive])
    normal = _normal_unchecked(surface, x, y)
    t, ok = refract_many(rays.dir[alive], normal, n1, n2)
    sub = np.flatnonzero(alive)
    out.dir[sub[ok]] = t[ok]
    alive[sub[~ok]] = False
    out.alive = alive
    return out


def _ideal_lens_step(rays: Rays, lens: IdealLens, n_medium: float) -> Rays:
    out = rays.copy()
    live = rays.alive & (rays.dir[:, 2] > 0)
    t = (lens.z - rays.pos[:, 2]) / np.where(rays.dir[:, 2] > 0, rays.dir[:, 2], 1.0)
    pts = rays.pos + t[:, None] * rays.dir
    r = np.hypot(pts[:, 0], pts[:, 1])
    live &= r <= lens.semi_diameter
    d = rays.dir
    f = lens.focal_length
    F = np.stack([f * d[:, 0] / d[:, 2], f * d[:, 1] / d[:, 2], np.full(len(d), lens.z + f)], axis=1)
    to_f = F - pts
    dist = np.linalg.norm(to_f, axis=1)
    new_dir = to_f / dist[:, None]
    center = np.stack([np.zeros(len(d)), np.zeros(len(d)), np.full(len(d), lens.z)], axis=1)
    phase = np.linalg.norm(F - center, axis=1) - dist - (pts[:, 0] * d[:, 0] + pts[:, 1] * d[:, 1])
    out.opl[live] += n_medium * (t[live] + phase[live])
    out.pos[live] = pts[live]
    out.dir[live] = new_dir[live]
    out.alive = live
    return out


def trace_rays(rays: Rays, assembly: OpticalAssembly) -> Rays:
    wl = assembly.wavelength_nm
    n_med = index_at(assembly.medium, wl)
    for el in assembly.elements:
        if isinstance(el, IdealLens):
            rays = _ideal_lens_step(rays, el, n_med)
            continue
        n_glass = index_at(el.material, wl)
        rays = _surface_step(rays, el.front, n_med, n_glass)
        rays = _surface_step(rays, el.back, n_glass, n_med)
    return rays


def propagate_to_plane(rays: Rays, z: float, n_medium: float = 1.0) -> Rays:
    out = rays.copy()
    live = rays.alive & (np.abs(rays.dir[:, 2]) > 0)
    t = np.where(live, (z - rays.pos[:, 2]) / np.where(live, rays.dir[:, 2], 1.0), 0.0)
    out.pos = rays.pos + t[:, None] * rays.dir
    out.opl = rays.opl + n_medium * t
    out.alive = live
    return out


def trace(assembly: OpticalAssembly, na: float, sampling: str = "grid", n: int = 65,
          seed: int | None = None, directions=None) -> TracedBundle:
    """Launch a cone of rays from the object point and trace it through the assembly.

    ``sampling`` is ``"grid"`` (Cartesian grid of direction sines, ``n``
    across), ``"random"`` (``n`` rays uniform in solid angle) or ``"fan"``
    (meridional fan of ``n`` rays). Explicit ``directions`` override it.
    """
    if directions is not None:
        d = np.atleast_2d(np.asarray(directions, dtype=float))
        pupil = d[:, :2] / na
    elif sampling == "grid":
        d, pupil = cone_grid(na, n)
    elif sampling == "random":
        d, pupil = cone_random(na, n, np.random.default_rng(seed))
    elif sampling == "fan":
        d, pupil = cone_fan(na, n)
    else:
        raise ValueError(f"unknown sampling {sampling!r}")
    rays = Rays.from_directions(assembly.object_position, d)
    out = trace_rays(rays, assembly)
    if assembly.image_z is not None:
        out = propagate_to_plane(out, assembly.image_z, index_at(assembly.medium, assembly.wavelength_nm))
    return TracedBundle(out, rays.dir.copy(), pupil, len(rays), assembly.wavelength_nm, na)


def direction_spread(bundle: TracedBundle) -> float:
    """RMS angular deviation (rad) of live exit directions from their mean."""
    d = bundle.rays.dir[bundle.alive]
    mean = d.mean(axis=0)
    mean /= np.linalg.norm(mean)
    ang = np.arccos(np.clip(d @ mean, -1.0, 1.0))
    return float(np.sqrt(np.mean(ang**2)))


@dataclass
class SpotDiagram:
    points: np.ndarray  # (N, 2) transverse positions, mm
    centroid: np.ndarray
    rms_radius: float


def spot_diagram(bundle: TracedBundle, z: float, n_medium: float = 1.0) -> SpotDiagram:
    rays = propagate_to_plane(bundle.rays, z, n_medium)
    pts = rays.pos[rays.alive][:, :2]
    if len(pts) < 3:
        raise InsufficientSamplingError("fewer than 3 live rays reach the evaluation plane")
    c = pts.mean(axis=0)
    rms = float(np.sqrt(np.mean(np.sum((pts - c) ** 2, axis=1))))
    return SpotDiagram(pts, c, rms)


def best_focus(bundle: TracedBundle, n_medium: float = 1.0) -> float:
    """Axial position minimising the geometric RMS spot radius (closed form)."""
    rays = bundle.rays
    p = rays.pos[rays.alive]
    d = rays.dir[rays.alive]
    # transverse position at z: p_perp + (z - p_z) * d_perp / d_z ; quadratic in z
    a = d[:, :2] / d[:, 2:3]
    b = p[:, :2] - p[:, 2:3] * a
    a_c = a - a.mean(axis=0)
    b_c = b - b.mean(axis=0)
    return float(-np.sum(a_c * b_c) / np.sum(a_c * a_c))


def least_squares_focus(bundle: TracedBundle) -> np.ndarray:
    """Point minimising the summed squared distance to all live ray lines."""
    p = bundle.rays.pos[bundle.alive]
    d = bundle.rays.dir[bundle.alive]
    eye = np.eye(3)
    proj = eye[None, :, :] - d[:, :, None] * d[:, None, :]
    A = proj.sum(axis=0)
    b = np.einsum("nij,nj->i", proj, p)
    return np.linalg.solve(A, b)


def rod_clipping(trap, collection_na: float, samples: int, seed: int):
    """Monte Carlo rod shadowing of the collection cone; see :func:`ionphotonics.trap.rod_clipping`."""
    from .trap import rod_clipping as _rod_clipping

    return _rod_clipping(trap, collection_na, samples, seed)
