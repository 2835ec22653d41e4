"""Single-mode fiber coupling and dipole polarization loss."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import dblquad
from scipy.optimize import minimize

from . import waveoptics as wo


@dataclass(frozen=True)
class FiberMode:
    """Gaussian approximation of the LP01 mode."""

    waist_um: float
    wavelength_nm: float

    @property
    def na_eff(self) -> float:
        return self.wavelength_nm * 1e-3 / (math.pi * self.waist_um)

    def field(self, x_um: np.ndarray, y_um: np.ndarray) -> np.ndarray:
        """Mode field normalised to unit power (per um^2)."""
        w = self.waist_um
        return math.sqrt(2 / math.pi) / w * np.exp(-(x_um**2 + y_um**2) / w**2)

    def pupil_field(self, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
        """Angular spectrum of the mode, Gaussian in the direction sines."""
        na = self.na_eff
        return np.exp(-(sx**2 + sy**2) / na**2)


def gaussian_mode(na_eff: float, wavelength_nm: float) -> FiberMode:
    if not 0 < na_eff < 0.3:
        raise ValueError(f"effective NA {na_eff} outside the paraxial range (0, 0.3)")
    if wavelength_nm <= 0:
        raise ValueError("wavelength must be positive")
    return FiberMode(wavelength_nm * 1e-3 / (math.pi * na_eff), wavelength_nm)


def overlap(ff: wo.FocalField, mode: FiberMode, offset_um=(0.0, 0.0)) -> float:
    x = ff.coords_um
    X, Y = np.meshgrid(x - offset_um[0], x - offset_um[1], indexing="xy")
    m = mode.field(X, Y) * ff.pitch_um  # unit power per pixel basis
    return float(abs(np.sum(np.conj(m) * ff.field)) ** 2 / ff.total_power)


def pupil_overlap(pupil: wo.PupilField, mode: FiberMode, image_na: float | None = None,
                  defocus_um: float = 0.0, offset_um=(0.0, 0.0)) -> float:
    """Coupling computed directly in the pupil: |<E, M>|^2 / (|E|^2 |M|^2).

    A lateral fiber offset is a linear phase and an axial one the exact
    defocus phase, so this is equivalent to the focal-plane overlap by
    Parseval; it is used as an oracle and for fast position searches.
    """
    na = image_na if image_na is not None else pupil.image_na
    c = pupil.coords * na
    SX, SY = np.meshgrid(c, c, indexing="xy")
    m = mode.pupil_field(SX, SY)
    e = pupil.field
    if defocus_um:
        e = e * np.exp(1j * wo.defocus_phase(pupil, defocus_um, na))
    if offset_um[0] or offset_um[1]:
        k = 2 * math.pi / (pupil.wavelength_nm * 1e-3)
        e = e * np.exp(-1j * k * (SX * offset_um[0] + SY * offset_um[1]))
    # the mode extends beyond the pupil aperture: its norm needs the full plane
    m_norm = (math.pi * mode.na_eff**2 / 2) / (na * pupil.step) ** 2
    return float(abs(np.sum(np.conj(m) * e)) ** 2 / (np.sum(np.abs(e) ** 2) * m_norm))


@dataclass
class CouplingResult:
    efficiency: float
    offset_um: tuple[float, float]
    defocus_um: float
    converged: bool
    subsample_change: float


def coupling_efficiency(ff: wo.FocalField, mode: FiberMode, optimize: bool = True,
                        check_convergence: bool = True) -> CouplingResult:
    """Power fraction coupled into the fiber mode.

    With ``optimize`` the fiber is moved laterally to the best overlap. The
    convergence check recomputes on every other sample; a change above 0.5 %
    marks the result unconverged.
    """
    off = (0.0, 0.0)
    if optimize:
        step = 0.2 * mode.waist_um
        simplex = np.array([[0.0, 0.0], [step, 0.0], [0.0, step]])
        res = minimize(lambda o: -overlap(ff, mode, o), np.zeros(2), method="Nelder-Mead",
                       options={"xatol": 1e-4, "fatol": 1e-9, "initial_simplex": simplex})
        off = (float(res.x[0]), float(res.x[1]))
    eta = overlap(ff, mode, off)
    change = 0.0
    if check_convergence:
        # per-pixel amplitude: a pixel of twice the pitch carries twice the amplitude
        sub = ff.field[::2, ::2] if ff.field.shape[0] % 2 else ff.field[1::2, 1::2]
        coarse = wo.FocalField(2 * sub, ff.pitch_um * 2, ff.total_power,
                               ff.wavelength_nm, ff.image_na)
        change = abs(overlap(coarse, mode, off) - eta) / max(eta, 1e-300)
    return CouplingResult(eta, off, 0.0, change < 5e-3, change)


def optimal_coupling(pupil: wo.PupilField, mode: FiberMode, image_na: float | None = None,
                     samples_per_airy: float = 16.0, half_width_airy: float = 10.0,
                     search_um: float = 20.0) -> CouplingResult:
    """Best coupling over the fiber's 3-D position.

    Start laterally at the focal-intensity peak, optimise (x, y, z) jointly
    on the pupil overlap, then evaluate on the focal-plane field centred on
    that position.
    """
    na = image_na if image_na is not None else pupil.image_na
    # the position search runs on at most a 256^2 grid; the final overlap uses the full pupil
    k = pupil.n // 256 if pupil.n > 256 and pupil.n % 256 == 0 else 1
    search = pupil.downsampled(k)
    coarse = wo.focal_field(search, na, samples_per_airy=2, half_width_airy=3 * half_width_airy)
    iy, ix = np.unravel_index(np.argmax(np.abs(coarse.field)), coarse.field.shape)
    x0 = np.array([coarse.coords_um[ix], coarse.coords_um[iy], 0.0])

    def neg(v):
        if abs(v[2]) > search_um:
            return 0.0
        return -pupil_overlap(search, mode, na, v[2], (v[0], v[1]))

    w = mode.waist_um
    simplex = x0 + np.array([[0, 0, 0], [0.3 * w, 0, 0], [0, 0.3 * w, 0], [0, 0, 3 * w]])
    best = None
    for start in (simplex, simplex + np.array([0, 0, -3 * w]), simplex + np.array([0, 0, 3 * w])):
        res = minimize(neg, start[0], method="Nelder-Mead",
                       options={"initial_simplex": start, "xatol": 1e-4, "fatol": 1e-10})
        if best is None or res.fun < best.fun:
            best = res
    xb, yb, dz = (float(v) for v in best.x)
    shifted = pupil.with_phase(wo.defocus_phase(pupil, dz, na))
    ff = wo.focal_field(shifted, na, samples_per_airy=samples_per_airy,
                        half_width_airy=half_width_airy, center_um=(xb, yb))
    r = coupling_efficiency(ff, mode)
    r.offset_um = (xb + r.offset_um[0], yb + r.offset_um[1])
    r.defocus_um = dz
    return r


# -- dipole emission into a finite cone ------------------------------------------------
# Lab frame: the lens axis is z. "pi" is a linear dipole along x (field
# quantization axis transverse to the lens axis); "sigma" is a circular
# dipole in the xy plane (quantization axis along the lens axis); "isotropic"
# is an incoherent sum of three orthogonal linear dipoles.

DIPOLES = {
    "pi": ([np.array([1.0, 0.0, 0.0])], [1.0]),
    "sigma": ([np.array([1.0, 1j, 0.0]) / math.sqrt(2)], [1.0]),
    "isotropic": ([np.eye(3)[i] for i in range(3)], [1 / 3] * 3),
}


def _pupil_fields(kind: str, theta, phi):
    """Collimated pupil field (x, y components) per dipole component.

    An aplanatic collimator maps e_theta to the radial and e_phi to the
    azimuthal pupil direction.
    """
    if kind not in DIPOLES:
        raise ValueError(f"unknown dipole configuration {kind!r}; expected one of {sorted(DIPOLES)}")
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    e_th = np.stack([ct * cp, ct * sp, -st])
    e_ph = np.stack([-sp, cp, np.zeros_like(sp)])
    out = []
    for d, w in zip(*DIPOLES[kind]):
        a_th = np.tensordot(d, e_th, axes=(0, 0))
        a_ph = np.tensordot(d, e_ph, axes=(0, 0))
        ex = a_th * cp - a_ph * sp
        ey = a_th * sp + a_ph * cp
        out.append((w, ex, ey))
    return out


def _multiplier(C: np.ndarray) -> float:
    lam = np.linalg.eigvalsh(C)
    return float(lam[-1] / np.sum(lam))


def pupil_coherency(collection_na: float, kind: str = "sigma", n_theta: int = 64,
                    n_phi: int = 64) -> np.ndarray:
    """2x2 coherency matrix of the collimated beam, integrated over the cone."""
    tmax = math.asin(collection_na)
    xt, wt = np.polynomial.legendre.leggauss(n_theta)
    th = 0.5 * tmax * (xt + 1)
    wt = 0.5 * tmax * wt
    ph = np.arange(n_phi) * 2 * math.pi / n_phi  # periodic: trapezoid is spectral
    T, P = np.meshgrid(th, ph, indexing="ij")
    W = (wt[:, None] * np.sin(T)) * (2 * math.pi / n_phi)
    C = np.zeros((2, 2), complex)
    for w, ex, ey in _pupil_fields(kind, T, P):
        E = (ex, ey)
        for i in range(2):
            for k in range(2):
                C[i, k] += w * np.sum(W * E[i] * np.conj(E[k]))
    return C


def polarization_loss(collection_na: float, dipole_config: str = "sigma",
                      n_theta: int = 64, n_phi: int = 64) -> float:
    """Multiplier: fraction of collected power in the best single uniform polarization.

    lambda_max / trace of the pupil coherency matrix. Approaches 1 as NA -> 0
    for the pure dipoles; an isotropic emitter is unpolarized (0.5) at any NA.
    """
    if not 0 < collection_na < 1:
        raise ValueError("collection_na must be in (0, 1)")
    return _multiplier(pupil_coherency(collection_na, dipole_config, n_theta, n_phi))


def polarization_loss_dblquad(collection_na: float, dipole_config: str = "sigma") -> float:
    """Independent adaptive spherical quadrature of the same multiplier (oracle).

    Integrates the far-field Stokes-like products directly in (e_theta, e_phi)
    components rotated into the lab frame, one scalar integral per entry.
    """
    tmax = math.asin(collection_na)
    ds, ws = DIPOLES[dipole_config] if dipole_config in DIPOLES else (None, None)
    if ds is None:
        raise ValueError(f"unknown dipole configuration {dipole_config!r}")

    def entry(i, k, part):
        def f(p, t):
            v = 0.0
            for d, w in zip(ds, ws):
                # far-field E is the transverse projection of the dipole: d - (d.n) n
                n = np.array([math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), math.cos(t)])
                e = d - (d @ n) * n
                # aplanatic rotation about the axis perpendicular to z and n
                e_th = np.array([math.cos(t) * math.cos(p), math.cos(t) * math.sin(p), -math.sin(t)])
                rad = np.array([math.cos(p), math.sin(p), 0.0])
                a_th = e @ e_th
                ep = e - a_th * e_th  # azimuthal part, already transverse to z
                E = a_th * rad + ep
                v += w * E[i] * np.conj(E[k])
            v *= math.sin(t)
            return float(np.real(v) if part == 0 else np.imag(v))

        return dblquad(f, 0, tmax, 0, 2 * math.pi, epsabs=1e-11, epsrel=1e-10)[0]

    C = np.array([[entry(i, k, 0) + 1j * entry(i, k, 1) for k in range(2)] for i in range(2)])
    return _multiplier(C)
