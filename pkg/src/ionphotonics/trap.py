"""Four-rod Paul trap: Mathieu parameters, secular frequencies, line-charge
potentials and rod shadowing of the collection cone.

Axes: z is the trap (needle) axis. Rod centres sit at (+-sx/2, +-sy/2) in the
transverse plane; the RF is applied to one diagonal pair, the other pair is
RF ground. Mathieu "x"/"y" refer to the principal axes of the resulting
quadrupole (rotated 45 deg for a square layout).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants as sc
from scipy.integrate import quad
from scipy.optimize import least_squares

AMU = sc.physical_constants["atomic mass constant"][0]
E_CHARGE = sc.e
Q_STABILITY = 0.908


class InstabilityError(ValueError):
    pass


class UnderdeterminedError(ValueError):
    pass


class ElectrodeOverlapError(ValueError):
    pass


@dataclass(frozen=True)
class Ion:
    name: str
    mass_u: float
    charge: int = 1

    @property
    def mass_kg(self) -> float:
        return self.mass_u * AMU


BA138 = Ion("138Ba+", 137.905247)
YB171 = Ion("171Yb+", 170.936331)
IONS = {"Ba138": BA138, "Yb171": YB171}


@dataclass(frozen=True)
class TrapGeometry:
    rod_diameter_mm: float = 0.25
    rod_spacing_collection_mm: float = 1.00  # transverse to the lens axis
    rod_spacing_side_mm: float = 0.56       # along the lens axis
    needle_gap_mm: float = 3.3
    collection_axis: str = "normal-to-1mm-pair"

    def __post_init__(self):
        if min(self.rod_diameter_mm, self.rod_spacing_collection_mm, self.rod_spacing_side_mm,
               self.needle_gap_mm) <= 0:
            raise ValueError("trap dimensions must be positive")
        if self.rod_diameter_mm >= min(self.rod_spacing_collection_mm, self.rod_spacing_side_mm):
            raise ValueError("rods overlap")
        if self.collection_axis not in ("normal-to-1mm-pair", "along-1mm-pair"):
            raise ValueError(f"unknown collection_axis {self.collection_axis!r}")

    @property
    def r0_mm(self) -> float:
        """Ion to rod-centre distance."""
        return math.hypot(self.rod_spacing_collection_mm / 2, self.rod_spacing_side_mm / 2)

    @property
    def z0_mm(self) -> float:
        return self.needle_gap_mm / 2

    @property
    def ion_rod_surface_distance_mm(self) -> float:
        return self.r0_mm - self.rod_diameter_mm / 2

    def rod_centers(self) -> np.ndarray:
        """Rod centres (mm) in a frame whose +y is the collection (lens) axis.

        Order: the two RF rods first (one diagonal), then the RF-ground pair.
        """
        a, b = self.rod_spacing_collection_mm / 2, self.rod_spacing_side_mm / 2
        if self.collection_axis == "along-1mm-pair":
            a, b = b, a
        return np.array([[a, b], [-a, -b], [-a, b], [a, -b]])


@dataclass(frozen=True)
class DriveParameters:
    rf_peak_to_peak_V: float = 1000.0
    rf_frequency_MHz: float = 20.0
    needle_dc_V: float = 600.0
    dc_quadrupole_V: float = 1.01
    kappa_r: float = 1.0
    kappa_z: float = 1.0

    def __post_init__(self):
        vals = (self.rf_peak_to_peak_V, self.rf_frequency_MHz, self.needle_dc_V,
                self.dc_quadrupole_V, self.kappa_r, self.kappa_z)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("drive parameters must be finite")
        if self.rf_frequency_MHz <= 0:
            raise ValueError("RF frequency must be positive")

    @property
    def omega_rf(self) -> float:
        return 2 * math.pi * self.rf_frequency_MHz * 1e6

    @property
    def rf_amplitude_V(self) -> float:
        return self.rf_peak_to_peak_V / 2


@dataclass(frozen=True)
class MathieuPoint:
    a: tuple[float, float, float]
    q: tuple[float, float, float]
    omega_rf: float
    ion: Ion

    @property
    def stable(self) -> bool:
        return all(_in_first_region(a, q) for a, q in zip(self.a, self.q))


def _in_first_region(a: float, q: float) -> bool:
    q = abs(q)
    if q >= Q_STABILITY:
        return False
    # series boundaries of the lowest stability region (a0 and b1 curves)
    lower = -q**2 / 2 + 7 * q**4 / 128 - 29 * q**6 / 2304
    upper = 1 - q - q**2 / 8 + q**3 / 64 - q**4 / 1536
    return lower <= a < upper


def mathieu_params(drive: DriveParameters, geom: TrapGeometry, ion: Ion = BA138) -> MathieuPoint:
    m = ion.mass_kg
    qe = ion.charge * E_CHARGE
    W2 = drive.omega_rf**2
    r0 = geom.r0_mm * 1e-3
    z0 = geom.z0_mm * 1e-3
    q_r = 2 * qe * drive.kappa_r * drive.rf_amplitude_V / (m * r0**2 * W2)
    a_z = 8 * qe * drive.kappa_z * drive.needle_dc_V / (m * z0**2 * W2)
    a_q = 4 * qe * drive.kappa_r * drive.dc_quadrupole_V / (m * r0**2 * W2)
    a = (-a_z / 2 + a_q, -a_z / 2 - a_q, a_z)
    return MathieuPoint(a, (q_r, -q_r, 0.0), drive.omega_rf, ion)


def secular_frequencies(mp: MathieuPoint) -> tuple[float, float, float]:
    """Lowest-order secular frequencies (x, y, z) in kHz (cyclic).

    An axis with a = q = 0 is unconfined and reported as 0.
    """
    if not mp.stable:
        raise InstabilityError(f"Mathieu point a={mp.a}, q={mp.q} is outside the first stability region")
    out = []
    for a, q in zip(mp.a, mp.q):
        beta2 = a + q * q / 2
        if beta2 < 0:
            raise InstabilityError(f"a + q^2/2 = {beta2:.3g} < 0: not confined")
        out.append(mp.omega_rf / 2 * math.sqrt(beta2) / (2 * math.pi) / 1e3)
    return tuple(out)


def model_frequencies(drive, geom, ion) -> np.ndarray:
    """(axial, lower radial, upper radial) in kHz."""
    wx, wy, wz = secular_frequencies(mathieu_params(drive, geom, ion))
    return np.array([wz, min(wx, wy), max(wx, wy)])


@dataclass
class GeometryFit:
    kappa_r: float
    kappa_z: float
    residuals_kHz: np.ndarray
    assumed_rf_frequency_MHz: float
    fitted: tuple[str, ...]


def _initial_kappas(meas, drive: DriveParameters, geom: TrapGeometry, ion: Ion) -> dict:
    """Analytic start: kappa_z from the axial mode, kappa_r from the mean radial mode
    (lowest order, DC quadrupole ignored)."""
    W = drive.omega_rf
    qe = ion.charge * E_CHARGE
    a_z = (2 * 2 * math.pi * meas[0] * 1e3 / W) ** 2
    out = {"kappa_z": a_z * ion.mass_kg * (geom.z0_mm * 1e-3) ** 2 * W**2 / (8 * qe * drive.needle_dc_V)}
    if len(meas) > 1:
        a_r = (2 * 2 * math.pi * np.mean(meas[1:]) * 1e3 / W) ** 2
        q = math.sqrt(2 * (a_r + a_z / 2))
        out["kappa_r"] = q * ion.mass_kg * (geom.r0_mm * 1e-3) ** 2 * W**2 / (2 * qe * drive.rf_amplitude_V)
    return out


def fit_geometry_factors(measured_kHz, drive: DriveParameters, geom: TrapGeometry,
                         ion: Ion = BA138, fit=("kappa_r", "kappa_z")) -> GeometryFit:
    """Least-squares geometric efficiencies from measured secular frequencies.

    ``measured_kHz`` is (axial[, radial, radial]); the lowest frequency is the
    axial mode, since the ions align along the trap axis.
    """
    meas = np.sort(np.asarray(measured_kHz, float))
    fit = tuple(fit)
    if not set(fit) <= {"kappa_r", "kappa_z"} or not fit:
        raise ValueError("fit must name kappa_r and/or kappa_z")
    if len(meas) < len(fit):
        raise UnderdeterminedError(f"{len(meas)} frequencies cannot fix {len(fit)} factors")
    if len(meas) == 1 and "kappa_r" in fit:
        raise UnderdeterminedError("an axial frequency alone does not constrain kappa_r")

    if fit == ("kappa_z",) and len(meas) == 1:
        # closed form: a_z = (2 w_z / Omega)^2
        a_z = (2 * 2 * math.pi * meas[0] * 1e3 / drive.omega_rf) ** 2
        z0 = geom.z0_mm * 1e-3
        kz = a_z * ion.mass_kg * z0**2 * drive.omega_rf**2 / (8 * ion.charge * E_CHARGE * drive.needle_dc_V)
        d = replace(drive, kappa_z=kz)
        res = model_frequencies(d, geom, ion)[:1] - meas
        return GeometryFit(d.kappa_r, kz, res, drive.rf_frequency_MHz, fit)

    def build(p):
        kw = dict(zip(fit, p))
        return replace(drive, **kw)

    def resid(p):
        try:
            f = model_frequencies(build(p), geom, ion)
        except InstabilityError:
            return np.full(len(meas), 1e6)
        return (f[:len(meas)] - meas) / meas

    p0 = [_initial_kappas(meas, drive, geom, ion).get(k, getattr(drive, k)) for k in fit]
    sol = least_squares(resid, p0, bounds=(1e-9, 10.0), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    d = build(sol.x)
    res = model_frequencies(d, geom, ion)[:len(meas)] - meas
    return GeometryFit(d.kappa_r, d.kappa_z, res, drive.rf_frequency_MHz, fit)


def mass_scaled_axial(freq_kHz: float, mass_from_u: float, mass_to_u: float) -> float:
    """DC (needle) axial frequency under a change of ion mass at fixed voltages."""
    return freq_kHz * math.sqrt(mass_from_u / mass_to_u)


# -- analytic electrode model -------------------------------------------------------

@dataclass
class LineChargeModel:
    """2-D potential of line charges at the rod centres.

    phi(r) = c0 - sum_k lam_k ln|r - c_k|, with lam and c0 fitted so that the
    potential on sampled rod-surface points matches the rod voltages.
    """

    centers: np.ndarray  # mm
    lam: np.ndarray
    c0: float
    rod_radius_mm: float
    surface_rms_error: float

    def potential(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        out = np.full(np.broadcast(x, y).shape, self.c0)
        for (cx, cy), lk in zip(self.centers, self.lam):
            out = out - lk * 0.5 * np.log((x - cx) ** 2 + (y - cy) ** 2)
        return out

    def gradient(self, x, y):
        """(dphi/dx, dphi/dy) in V/mm."""
        gx = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        gy = np.zeros_like(gx)
        for (cx, cy), lk in zip(self.centers, self.lam):
            dx, dy = x - cx, y - cy
            r2 = dx * dx + dy * dy
            gx = gx - lk * dx / r2
            gy = gy - lk * dy / r2
        return gx, gy

    def hessian(self, x: float = 0.0, y: float = 0.0) -> np.ndarray:
        h = np.zeros((2, 2))
        for (cx, cy), lk in zip(self.centers, self.lam):
            dx, dy = x - cx, y - cy
            r2 = dx * dx + dy * dy
            h[0, 0] += -lk * (dy * dy - dx * dx) / r2**2
            h[1, 1] += -lk * (dx * dx - dy * dy) / r2**2
            h[0, 1] += lk * 2 * dx * dy / r2**2
        h[1, 0] = h[0, 1]
        return h


def line_charge_model(geom: TrapGeometry, voltages, n_surface: int = 64) -> LineChargeModel:
    centers = geom.rod_centers()
    rho = geom.rod_diameter_mm / 2
    ang = np.arange(n_surface) * 2 * np.pi / n_surface
    rows, rhs = [], []
    for c, v in zip(centers, voltages):
        px = c[0] + rho * np.cos(ang)
        py = c[1] + rho * np.sin(ang)
        cols = [-0.5 * np.log((px - ck[0]) ** 2 + (py - ck[1]) ** 2) for ck in centers]
        rows.append(np.column_stack(cols + [np.ones_like(px)]))
        rhs.append(np.full_like(px, v))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    err = float(np.sqrt(np.mean((A @ sol - b) ** 2)))
    return LineChargeModel(centers, sol[:4], float(sol[4]), rho, err)


def rf_model(geom: TrapGeometry, amplitude_V: float = 1.0) -> LineChargeModel:
    return line_charge_model(geom, [amplitude_V, amplitude_V, 0.0, 0.0])


def dc_quadrupole_model(geom: TrapGeometry, u_V: float) -> LineChargeModel:
    return line_charge_model(geom, [u_V / 2, u_V / 2, -u_V / 2, -u_V / 2])


def geometric_kappa_r(geom: TrapGeometry) -> float:
    """Effective kappa_r of the line-charge model: |phi''| r0^2 / V0 at the centre."""
    h = rf_model(geom, 1.0).hessian()
    return float(np.max(np.abs(np.linalg.eigvalsh(h))) * geom.r0_mm**2)


@dataclass
class PotentialMap:
    x_mm: np.ndarray
    y_mm: np.ndarray
    static_V: np.ndarray
    pseudo_eV: np.ndarray
    meta: dict = field(default_factory=dict)


def potential_map(geom: TrapGeometry, drive: DriveParameters, ion: Ion = BA138,
                  half_width_mm: float = 0.3, n: int = 61, z_mm: float = 0.0) -> PotentialMap:
    """Transverse static potential and RF pseudopotential on a square grid.

    The static part is the solved DC-quadrupole line-charge potential plus
    the needles' harmonic term kappa_z U (z^2 - (x^2+y^2)/2) / z0^2. Both
    maps use the model's own rod geometry, so its effective kappa_r is
    reported in ``meta`` rather than taken from the drive.
    """
    x = np.linspace(-half_width_mm, half_width_mm, n)
    X, Y = np.meshgrid(x, x, indexing="xy")
    centers = geom.rod_centers()
    rho = geom.rod_diameter_mm / 2
    d2 = np.min([(X - c[0]) ** 2 + (Y - c[1]) ** 2 for c in centers], axis=0)
    if np.any(d2 <= rho**2):
        raise ElectrodeOverlapError("grid reaches into an electrode")
    rf = rf_model(geom, drive.rf_amplitude_V)
    dcq = dc_quadrupole_model(geom, drive.dc_quadrupole_V)
    z0 = geom.z0_mm
    static = dcq.potential(X, Y) - dcq.potential(0.0, 0.0)
    static = static + drive.kappa_z * drive.needle_dc_V * (z_mm**2 - (X**2 + Y**2) / 2) / z0**2
    gx, gy = rf.gradient(X, Y)
    grad2 = (gx**2 + gy**2) * 1e6  # (V/m)^2
    pseudo = ion.charge * E_CHARGE * grad2 / (4 * ion.mass_kg * drive.omega_rf**2)  # volts = eV per charge
    meta = {"units": {"x": "mm", "y": "mm", "static": "V", "pseudo": "eV"},
            "grid": {"half_width_mm": half_width_mm, "n": n, "z_mm": z_mm},
            "assumed_rf_frequency_MHz": drive.rf_frequency_MHz,
            "kappa_r_geometric": geometric_kappa_r(geom),
            "surface_fit_rms_V": max(rf.surface_rms_error, dcq.surface_rms_error)}
    return PotentialMap(x, x.copy(), static, pseudo, meta)


def pseudo_frequencies(pmap: PotentialMap, ion: Ion = BA138, fit_radius_mm: float = 0.02) -> tuple[float, float]:
    """Radial frequencies (kHz) from a quadratic fit of the pseudopotential near the centre."""
    X, Y = np.meshgrid(pmap.x_mm, pmap.y_mm, indexing="xy")
    sel = X**2 + Y**2 <= fit_radius_mm**2
    if sel.sum() < 6:
        raise ValueError("too few grid points inside the fit radius")
    x, y = X[sel], Y[sel]
    A = np.column_stack([np.ones_like(x), x, y, x * x, x * y, y * y])
    c, *_ = np.linalg.lstsq(A, pmap.pseudo_eV[sel], rcond=None)
    H = np.array([[2 * c[3], c[4]], [c[4], 2 * c[5]]]) * 1e6  # V/m^2
    k = np.linalg.eigvalsh(H) * ion.charge * E_CHARGE
    w = np.sqrt(np.clip(k, 0, None) / ion.mass_kg) / (2 * math.pi) / 1e3
    return float(w[0]), float(w[1])


# -- rod shadowing of the collection cone ---------------------------------------------

@dataclass
class ClippingResult:
    blocked_fraction: float
    standard_error: float
    samples: int
    seed: int


def _cone_directions(rng, n, cos_max):
    """Uniform over solid angle in the cone about +y; returns (x, y, z) components."""
    c = rng.uniform(cos_max, 1.0, n)
    s = np.sqrt(1 - c * c)
    phi = rng.uniform(0, 2 * np.pi, n)
    return s * np.cos(phi), c, s * np.sin(phi)


def _blocked(dx, dy, centers, rho):
    # rods are infinite along z: a ray is shadowed iff its xy projection hits a rod circle
    norm = np.hypot(dx, dy)
    ux, uy = dx / norm, dy / norm
    hit = np.zeros(dx.shape, bool)
    for cx, cy in centers:
        along = cx * ux + cy * uy
        perp = np.abs(cx * uy - cy * ux)
        hit |= (along > 0) & (perp < rho)
    return hit


def rod_clipping(geom: TrapGeometry, collection_na: float, samples: int, seed: int,
                 chunk: int = 1_000_000, centers=None) -> ClippingResult:
    """Monte Carlo fraction of the NA cone (about the lens axis) shadowed by the rods.

    Random streams are spawned per chunk from the seed, so the estimate does
    not depend on how chunks are scheduled.
    """
    if not 0 < collection_na < 1:
        raise ValueError("collection_na must be in (0, 1)")
    samples = int(samples)
    if samples <= 0:
        raise ValueError("samples must be positive")
    centers = geom.rod_centers() if centers is None else np.atleast_2d(centers)
    rho = geom.rod_diameter_mm / 2
    cos_max = math.sqrt(1 - collection_na**2)
    n_chunks = -(-samples // chunk)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    hits = 0
    for i, ss in enumerate(streams):
        m = min(chunk, samples - i * chunk)
        dx, dy, _ = _cone_directions(np.random.default_rng(ss), m, cos_max)
        hits += int(np.count_nonzero(_blocked(dx, dy, centers, rho)))
    p = hits / samples
    return ClippingResult(p, math.sqrt(p * (1 - p) / samples), samples, seed)


def rod_solid_angle(center, rod_radius_mm: float, collection_na: float) -> float:
    """Solid angle of the cone (about +y) shadowed by one infinite rod (strip integral).

    With psi the azimuth about z measured from +y, the cone contains
    elevations |sin e| <= sqrt(1 - cos^2(theta_max)/cos^2(psi)), so
    Omega = int 2 sqrt(1 - cos^2 theta_max / cos^2 psi) dpsi over the rod's
    angular half-width asin(rho/D).
    """
    cx, cy = center
    D = math.hypot(cx, cy)
    if rod_radius_mm >= D:
        raise ElectrodeOverlapError("rod encloses the ion")
    psi_c = math.atan2(cx, cy)
    delta = math.asin(rod_radius_mm / D)
    ct = math.sqrt(1 - collection_na**2)
    tmax = math.acos(ct)
    lo, hi = max(psi_c - delta, -tmax), min(psi_c + delta, tmax)
    if lo >= hi:
        return 0.0

    def f(psi):
        return 2 * math.sqrt(max(0.0, 1 - ct**2 / math.cos(psi) ** 2))

    return quad(f, lo, hi, epsabs=1e-14, epsrel=1e-12)[0]


def clipping_fraction_exact(geom: TrapGeometry, collection_na: float) -> float:
    """Quadrature value of the blocked fraction (rods do not overlap in azimuth)."""
    cone = 2 * math.pi * (1 - math.sqrt(1 - collection_na**2))
    rho = geom.rod_diameter_mm / 2
    return sum(rod_solid_angle(c, rho, collection_na) for c in geom.rod_centers()) / cone


def geometry_from_config(cfg: dict) -> TrapGeometry:
    from .config import num

    t = cfg["trap"]
    return TrapGeometry(num(t["rod_diameter_mm"]), num(t["rod_spacing_collection_mm"]),
                        num(t["rod_spacing_side_mm"]), num(t["needle_gap_mm"]),
                        t.get("collection_axis", "normal-to-1mm-pair"))


def drive_from_config(cfg: dict) -> DriveParameters:
    from .config import num

    d = cfg["drive"]
    return DriveParameters(num(d["rf_peak_to_peak_V"]), num(d["rf_frequency_MHz"]),
                           num(d["needle_dc_V"]), num(d["dc_quadrupole_V"]),
                           num(d["kappa_r"]), num(d["kappa_z"]))
