"""Pupil fields, scalar diffraction PSFs, Zernike analysis and enclosed energy.

Pupil coordinates are normalised (rho = 1 at the pupil rim). For a
converging beam the normalised coordinate is the image-side direction sine
divided by the image NA, so the focal field is a 2-D Fourier transform of the
pupil field evaluated with a matrix DFT (arbitrary zoom, no padding).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CloughTocher2DInterpolator, NearestNDInterpolator
from scipy.special import factorial

from .raytrace import TracedBundle, least_squares_focus

COLLIMATED_SPREAD = 1e-3  # rad


class SamplingError(ValueError):
    pass


class AliasingError(ValueError):
    pass


class RankDeficiencyError(ValueError):
    pass


@dataclass
class PupilField:
    """Complex pupil field on an N x N grid spanning rho in [-extent, extent).

    ``phase`` is stored unwrapped (radians) next to the amplitude, so Zernike
    fits never need phase unwrapping.
    """

    amplitude: np.ndarray
    phase: np.ndarray
    wavelength_nm: float
    pupil_radius_mm: float
    extent: float = 2.0
    image_na: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.amplitude.shape[0]
        if self.amplitude.shape != (n, n) or self.phase.shape != (n, n):
            raise ValueError("amplitude and phase must be square arrays of equal shape")
        self.amplitude = np.where(self.mask, self.amplitude, 0.0)
        self.phase = np.where(self.mask, self.phase, 0.0)

    @property
    def n(self) -> int:
        return self.amplitude.shape[0]

    @property
    def step(self) -> float:
        return 2 * self.extent / self.n

    @property
    def coords(self) -> np.ndarray:
        return pupil_coords(self.n, self.extent)

    @property
    def mask(self) -> np.ndarray:
        x = self.coords
        return x[None, :] ** 2 + x[:, None] ** 2 <= 1.0

    @property
    def field(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.phase)

    @property
    def power(self) -> float:
        return float(np.sum(self.amplitude**2))

    def with_phase(self, extra: np.ndarray) -> "PupilField":
        return PupilField(self.amplitude, self.phase + extra, self.wavelength_nm,
                          self.pupil_radius_mm, self.extent, self.image_na, dict(self.meta))

    def downsampled(self, k: int) -> "PupilField":
        """Block-averaged copy on an (N/k)^2 grid with the same extent and centring."""
        if k == 1:
            return self
        if self.n % k:
            raise ValueError(f"grid of {self.n} is not divisible by {k}")
        m = self.n // k

        def block(a):
            return a.reshape(m, k, m, k).mean(axis=(1, 3))

        w = block(self.amplitude)
        ph = np.where(w > 0, block(self.amplitude * self.phase) / np.where(w > 0, w, 1.0), 0.0)
        return PupilField(w, ph, self.wavelength_nm, self.pupil_radius_mm, self.extent, self.image_na,
                          dict(self.meta))

    def opd_mm(self) -> np.ndarray:
        return self.phase * self.wavelength_nm * 1e-6 / (2 * np.pi)


def pupil_coords(n: int, extent: float = 2.0) -> np.ndarray:
    return (np.arange(n) - n / 2 + 0.5) * (2 * extent / n)


def uniform_pupil(n: int, wavelength_nm: float = 493.5, extent: float = 2.0,
                  image_na: float | None = None, pupil_radius_mm: float = 1.0) -> PupilField:
    z = np.zeros((n, n))
    return PupilField(np.ones((n, n)), z, wavelength_nm, pupil_radius_mm, extent, image_na)


# -- pupil from rays ---------------------------------------------------------------

def pupil_samples(bundle: TracedBundle, reference: str = "auto"):
    """Per-ray pupil coordinates and optical path differences.

    Returns a dict with normalised pupil positions ``xy``, ``opd_mm``
    (relative to the mean), launch direction sines, the pupil radius in mm
    and, for converging beams, the image NA and focus point.
    """
    rays = bundle.rays
    live = rays.alive
    p, d, opl = rays.pos[live], rays.dir[live], rays.opl[live]
    mean_dir = d.mean(axis=0)
    mean_dir /= np.linalg.norm(mean_dir)
    spread = float(np.max(np.arccos(np.clip(d @ mean_dir, -1, 1))))
    if reference == "auto":
        reference = "plane" if spread < COLLIMATED_SPREAD else "sphere"
    out = {"launch_sines": bundle.launch_dir[live, :2], "spread": spread, "reference": reference}
    if reference == "plane":
        z_ref = float(np.max(p[:, 2]))
        t = (z_ref - p[:, 2]) / d[:, 2]
        q = p + t[:, None] * d
        opl = opl + t
        c = 0.5 * (q[:, :2].max(axis=0) + q[:, :2].min(axis=0))
        xy = q[:, :2] - c
        radius = float(np.max(np.hypot(xy[:, 0], xy[:, 1])))
        out.update(xy=xy / radius, pupil_radius_mm=radius, image_na=None, z_ref=z_ref)
    else:
        focus = least_squares_focus(bundle)
        r_ref = float(np.linalg.norm(focus - p.mean(axis=0)))
        # path from each exit point to the reference sphere centred on the focus
        w = p - focus
        b = np.sum(w * d, axis=1)
        c2 = np.sum(w * w, axis=1) - r_ref**2
        t = -b - np.sqrt(np.maximum(b * b - c2, 0.0))
        q = p + t[:, None] * d
        opl = opl + t
        sines = -(q - focus)[:, :2] / r_ref
        na = float(np.max(np.hypot(sines[:, 0], sines[:, 1])))
        out.update(xy=sines / na, pupil_radius_mm=na * r_ref, image_na=na, focus=focus,
                   r_ref=r_ref)
    out["opd_mm"] = opl - opl.mean()
    return out


def build_pupil(bundle: TracedBundle, n: int = 256, apodization: str = "cos3",
                reference: str = "auto", require_collimated: bool = False,
                extent: float = 2.0) -> PupilField:
    """Interpolate traced rays onto an N x N pupil grid.

    Amplitude is sqrt(cos^3 theta) with theta the emission polar angle of the
    ray landing at that pupil point (``apodization="cos3"``). ``"isotropic"``
    instead uses the energy-conserving weight of a uniform point source
    (solid angle per unit pupil area), and ``"uniform"`` a flat pupil.
    """
    s = pupil_samples(bundle, reference)
    if require_collimated and s["reference"] != "plane":
        raise SamplingError(f"beam is not collimated (max deviation {s['spread']:.3g} rad)")
    xy = s["xy"]
    extent_rays = math.sqrt(len(xy) / math.pi)  # rays across a pupil radius
    if 2 * extent_rays < 16:
        raise SamplingError(f"only {len(xy)} live rays: too sparse to build a pupil")
    coords = pupil_coords(n, extent)
    X, Y = np.meshgrid(coords, coords, indexing="xy")
    inside = X**2 + Y**2 <= 1.0
    if inside.sum() < 64:
        raise SamplingError("pupil grid too coarse")
    pts = np.column_stack([X[inside], Y[inside]])
    vals = np.column_stack([s["opd_mm"], s["launch_sines"]])
    interp = CloughTocher2DInterpolator(xy, vals)
    got = interp(pts)
    bad = ~np.all(np.isfinite(got), axis=1)
    if bad.any():
        got[bad] = NearestNDInterpolator(xy, vals)(pts[bad])
    wl_mm = bundle.wavelength_nm * 1e-6
    phase = np.zeros((n, n))
    phase[inside] = 2 * np.pi * got[:, 0] / wl_mm
    sx = np.zeros((n, n))
    sy = np.zeros((n, n))
    sx[inside], sy[inside] = got[:, 1], got[:, 2]
    sin2 = np.clip(sx**2 + sy**2, 0.0, 1.0)
    cos_t = np.sqrt(1 - sin2)
    if apodization == "cos3":
        amp = cos_t**1.5
    elif apodization == "uniform":
        amp = np.ones((n, n))
    elif apodization == "isotropic":
        h = coords[1] - coords[0]
        dsx_dy, dsx_dx = np.gradient(sx, h)
        dsy_dy, dsy_dx = np.gradient(sy, h)
        jac = np.abs(dsx_dx * dsy_dy - dsx_dy * dsy_dx)
        amp = np.sqrt(jac / np.maximum(cos_t, 1e-12))
        amp = _fill_rim(amp, inside)
        amp /= amp[n // 2, n // 2] if amp[n // 2, n // 2] > 0 else 1.0
    else:
        raise ValueError(f"unknown apodization {apodization!r}")
    field = PupilField(np.where(inside, amp, 0.0), phase, bundle.wavelength_nm,
                       s["pupil_radius_mm"], extent, s["image_na"])
    field.meta.update(reference=s["reference"], apodization=apodization,
                      ray_xy=xy, ray_opd_mm=s["opd_mm"])
    if "focus" in s:
        field.meta["focus"] = s["focus"]
    return field


def _fill_rim(a: np.ndarray, inside: np.ndarray) -> np.ndarray:
    # one-sided gradients at the rim are poor: copy the nearest interior ring value
    from scipy.ndimage import binary_erosion, distance_transform_edt

    core = binary_erosion(inside, iterations=2)
    _, (iy, ix) = distance_transform_edt(~core, return_indices=True)
    out = a.copy()
    rim = inside & ~core
    out[rim] = a[iy[rim], ix[rim]]
    return out


def sample_pupil_phase(field: PupilField, xy: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of the pupil phase at normalised positions."""
    from scipy.interpolate import RegularGridInterpolator

    c = field.coords
    f = RegularGridInterpolator((c, c), field.phase.T, bounds_error=False, fill_value=None)
    return f(xy)


# -- Zernike polynomials (Noll index, unit RMS over the unit disk) -----------------

def noll_to_nm(j: int) -> tuple[int, int]:
    if j < 1:
        raise ValueError("Noll index starts at 1")
    n = 0
    while (n + 1) * (n + 2) // 2 < j:
        n += 1
    k = j - n * (n + 1) // 2 - 1  # 0-based position within radial order n
    ms = sorted({abs(m) for m in range(-n, n + 1, 2)})
    # positions: list |m| values with each nonzero |m| twice, ascending
    order = []
    for m in ms:
        order += [m] if m == 0 else [m, m]
    m = order[k]
    if m != 0:
        m = m if j % 2 == 0 else -m  # even j -> cosine term
    return n, m


def zernike_radial(n: int, m: int, rho: np.ndarray) -> np.ndarray:
    m = abs(m)
    out = np.zeros_like(rho)
    for k in range((n - m) // 2 + 1):
        c = (-1) ** k * factorial(n - k, exact=True) / (
            factorial(k, exact=True) * factorial((n + m) // 2 - k, exact=True)
            * factorial((n - m) // 2 - k, exact=True))
        out = out + c * rho ** (n - 2 * k)
    return out


def zernike(j: int, rho: np.ndarray, theta: np.ndarray) -> np.ndarray:
    n, m = noll_to_nm(j)
    r = zernike_radial(n, m, rho)
    if m == 0:
        return math.sqrt(n + 1) * r
    ang = np.cos(m * theta) if m > 0 else np.sin(-m * theta)
    return math.sqrt(2 * (n + 1)) * r * ang


def zernike_basis(max_j: int, n: int, extent: float = 2.0):
    """Return (basis[j-1] on the pupil mask as a (max_j, npts) array, mask)."""
    c = pupil_coords(n, extent)
    X, Y = np.meshgrid(c, c, indexing="xy")
    rho = np.hypot(X, Y)
    mask = rho <= 1.0
    th = np.arctan2(Y, X)
    basis = np.array([zernike(j, rho[mask], th[mask]) for j in range(1, max_j + 1)])
    return basis, mask


def disk_coverage(n: int, extent: float = 2.0, oversample: int = 16) -> np.ndarray:
    """Fraction of each grid pixel inside the unit disk (supersampled)."""
    c = pupil_coords(n, extent)
    h = c[1] - c[0]
    o = (np.arange(oversample) + 0.5) / oversample * h - h / 2
    w = np.zeros((n, n))
    for oy in o:
        y2 = (c[:, None] + oy) ** 2
        for ox in o:
            w += (c[None, :] + ox) ** 2 + y2 <= 1.0
    return w / oversample**2


def zernike_gram(max_j: int, n: int, extent: float = 2.0) -> np.ndarray:
    """Gram matrix of the Noll basis under area-weighted quadrature on the sampled disk."""
    w = disk_coverage(n, extent)
    c = pupil_coords(n, extent)
    X, Y = np.meshgrid(c, c, indexing="xy")
    sel = w > 0
    rho, th = np.hypot(X[sel], Y[sel]), np.arctan2(Y[sel], X[sel])
    B = np.array([zernike(j, rho, th) for j in range(1, max_j + 1)])
    return (B * w[sel]) @ B.T / w[sel].sum()


def zernike_phase(coeffs_waves, n: int, extent: float = 2.0) -> np.ndarray:
    """Phase map (radians) for Noll coefficients given in waves."""
    basis, mask = zernike_basis(len(coeffs_waves), n, extent)
    out = np.zeros((n, n))
    out[mask] = 2 * np.pi * np.asarray(coeffs_waves) @ basis
    return out


@dataclass
class ZernikeFit:
    coefficients: np.ndarray  # waves, index 0 is Noll j = 1
    residual_rms_waves: float

    def __getitem__(self, j: int) -> float:
        return float(self.coefficients[j - 1])


def zernike_fit(field: PupilField, max_j: int = 15) -> ZernikeFit:
    basis, mask = zernike_basis(max_j, field.n, field.extent)
    if mask.sum() < 4 * max_j:
        raise RankDeficiencyError(f"{mask.sum()} pupil samples cannot support {max_j} terms")
    A = basis.T
    if np.linalg.matrix_rank(A) < max_j:
        raise RankDeficiencyError(f"grid of {field.n} too coarse for Noll order {max_j}")
    w = field.phase[mask] / (2 * np.pi)
    coef, *_ = np.linalg.lstsq(A, w, rcond=None)
    res = w - A @ coef
    return ZernikeFit(coef, float(np.sqrt(np.mean(res**2))))


def rms_wavefront_waves(field: PupilField, remove=(1,)) -> float:
    """Amplitude-unweighted RMS phase error (waves) after removing Noll terms."""
    fit = zernike_fit(field, max(remove))
    basis, mask = zernike_basis(max(remove), field.n, field.extent)
    w = field.phase[mask] / (2 * np.pi)
    for j in remove:
        w = w - fit[j] * basis[j - 1]
    return float(np.sqrt(np.mean(w**2)))


# -- focal fields ------------------------------------------------------------------

@dataclass
class FocalField:
    """Complex image-plane field; |E|^2 is power per pixel."""

    field: np.ndarray
    pitch_um: float
    total_power: float  # power of the full (untruncated) focal field
    wavelength_nm: float
    image_na: float

    @property
    def coords_um(self) -> np.ndarray:
        m = self.field.shape[0]
        return (np.arange(m) - m // 2) * self.pitch_um

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.field) ** 2


@dataclass
class IntensityImage:
    data: np.ndarray
    pitch_um: float

    @property
    def centroid_um(self) -> np.ndarray:
        m0, m1 = self.data.shape
        y = (np.arange(m0) - m0 // 2) * self.pitch_um
        x = (np.arange(m1) - m1 // 2) * self.pitch_um
        tot = self.data.sum()
        return np.array([np.sum(self.data.sum(axis=0) * x) / tot, np.sum(self.data.sum(axis=1) * y) / tot])

    @property
    def total(self) -> float:
        return float(self.data.sum())


def _mft_matrix(coords_in, coords_out, scale):
    return np.exp(-2j * np.pi * scale * np.outer(coords_out, coords_in))


def focal_field(pupil: PupilField, image_na: float | None = None, m: int | None = None,
                pitch_um: float | None = None, samples_per_airy: float = 16.0,
                half_width_airy: float = 8.0, center_um=(0.0, 0.0)) -> FocalField:
    """Scalar far field of the pupil by matrix DFT.

    Output sampling is ``pitch_um`` (default: ``samples_per_airy`` samples per
    Airy radius 0.61 lambda/NA) over ``m`` points (default: enough to cover
    +/- ``half_width_airy`` Airy radii).
    """
    na = image_na if image_na is not None else pupil.image_na
    if na is None or not 0 < na < 1:
        raise ValueError("an image-side NA in (0, 1) is required")
    if pupil.extent < 2.0 - 1e-12:
        raise AliasingError("pupil fills more than half of the grid")
    wl_um = pupil.wavelength_nm * 1e-3
    airy = 0.61 * wl_um / na
    if pitch_um is None:
        pitch_um = airy / samples_per_airy
    if m is None:
        m = 2 * int(math.ceil(half_width_airy * airy / pitch_um)) + 1
    ds = na * pupil.step  # direction-sine step
    s = na * pupil.coords
    x_out = (np.arange(m) - m // 2) * pitch_um
    scale = 1.0 / wl_um
    Ax = _mft_matrix(s, x_out + center_um[0], scale)
    Ay = _mft_matrix(s, x_out + center_um[1], scale)
    norm = ds * pitch_um / wl_um  # per axis: sqrt(norm) each -> norm overall
    E = norm * (Ay @ pupil.field @ Ax.T)
    return FocalField(E, pitch_um, pupil.power, pupil.wavelength_nm, na)


def full_field_fft(pupil: PupilField, image_na: float) -> FocalField:
    """Unzoomed DFT over the full alias-free period (exact Parseval)."""
    wl_um = pupil.wavelength_nm * 1e-3
    ds = image_na * pupil.step
    n = pupil.n
    pitch = wl_um / (n * ds)
    E = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(pupil.field), norm="ortho"))
    return FocalField(E, pitch, pupil.power, pupil.wavelength_nm, image_na)


def psf(pupil: PupilField, image_na: float | None = None, **kw) -> IntensityImage:
    ff = focal_field(pupil, image_na, **kw)
    return IntensityImage(ff.intensity, ff.pitch_um)


def strehl_ratio(pupil: PupilField, image_na: float | None = None, search_airy: float = 2.0) -> float:
    """Peak of the aberrated PSF over the peak of the same pupil without phase error."""
    ideal = PupilField(pupil.amplitude, np.zeros_like(pupil.phase), pupil.wavelength_nm,
                       pupil.pupil_radius_mm, pupil.extent, pupil.image_na)
    peak_ideal = abs(np.sum(ideal.field)) ** 2
    # coarse search for the peak then refine around it
    na = image_na if image_na is not None else pupil.image_na
    ff = focal_field(pupil, na, samples_per_airy=4, half_width_airy=search_airy)
    iy, ix = np.unravel_index(np.argmax(np.abs(ff.field)), ff.field.shape)
    c = ff.coords_um
    fine = focal_field(pupil, na, pitch_um=ff.pitch_um / 16, m=33, center_um=(c[ix], c[iy]))
    peak = np.max(np.abs(fine.field)) ** 2
    norm = (na * pupil.step * fine.pitch_um / (pupil.wavelength_nm * 1e-3)) ** 2
    return float(peak / (peak_ideal * norm))


def defocus_phase(pupil: PupilField, dz_um: float, image_na: float | None = None) -> np.ndarray:
    """Exact phase (rad) of an axial focal shift dz for the pupil's direction sines."""
    na = image_na if image_na is not None else pupil.image_na
    c = pupil.coords
    s2 = (na**2) * (c[None, :] ** 2 + c[:, None] ** 2)
    k = 2 * np.pi / (pupil.wavelength_nm * 1e-3)
    return np.where(pupil.mask, k * dz_um * (np.sqrt(np.clip(1 - s2, 0, 1)) - 1), 0.0)


# -- detector binning and enclosed energy --------------------------------------------

def bin_to_pixels(image: IntensityImage, pixel_um: float) -> IntensityImage:
    """Integrate a finely sampled image over square detector pixels."""
    k = pixel_um / image.pitch_um
    kr = int(round(k))
    if kr < 1 or abs(k - kr) > 1e-6:
        raise ValueError("pixel pitch must be an integer multiple of the image sampling")
    m = image.data.shape[0]
    nb = m // kr
    trim = m - nb * kr
    lo = trim // 2
    d = image.data[lo:lo + nb * kr, lo:lo + nb * kr]
    return IntensityImage(d.reshape(nb, kr, nb, kr).sum(axis=(1, 3)), pixel_um)


class BoundsError(ValueError):
    pass


def enclosed_fraction(image: IntensityImage, side_lengths, pixel_pitch_um: float | None = None) -> np.ndarray:
    """Fraction of the total counts within N x N pixel squares centred on the centroid.

    If ``pixel_pitch_um`` differs from the image sampling the image is first
    binned to that pitch.
    """
    if pixel_pitch_um is not None and not math.isclose(pixel_pitch_um, image.pitch_um):
        image = bin_to_pixels(image, pixel_pitch_um)
    d = np.clip(image.data, 0.0, None)
    tot = d.sum()
    if tot <= 0:
        raise ValueError("image has no counts")
    ny, nx = d.shape
    cy = np.sum(d.sum(axis=1) * np.arange(ny)) / tot
    cx = np.sum(d.sum(axis=0) * np.arange(nx)) / tot
    out = []
    for n_side in side_lengths:
        n_side = int(n_side)
        if n_side >= max(nx, ny):
            if n_side > max(nx, ny):
                raise BoundsError(f"{n_side} x {n_side} square exceeds the {nx} x {ny} image")
            out.append(float(d.sum() / tot))
            continue
        # lower-left pixel index so the square's centre is nearest the centroid
        x0 = int(round(cx - (n_side - 1) / 2))
        y0 = int(round(cy - (n_side - 1) / 2))
        x0 = min(max(x0, 0), nx - n_side) if n_side <= nx else None
        y0 = min(max(y0, 0), ny - n_side) if n_side <= ny else None
        if x0 is None or y0 is None:
            raise BoundsError(f"{n_side} x {n_side} square exceeds the image")
        out.append(float(d[y0:y0 + n_side, x0:x0 + n_side].sum() / tot))
    return np.array(out)


# -- synthetic surface errors ---------------------------------------------------------

def surface_error_map(rms_target_nm: float, correlation_length_mm: float, seed: int,
                      n: int = 256, pupil_radius_mm: float = 10.5, extent: float = 2.0) -> np.ndarray:
    """Gaussian random surface (nm) with Gaussian correlation, scaled to the target RMS
    over the pupil disk. Zero outside the disk.
    """
    if rms_target_nm < 0:
        raise ValueError("rms_target_nm must be >= 0")
    if correlation_length_mm <= 0:
        raise ValueError("correlation_length_mm must be positive")
    if rms_target_nm == 0:
        return np.zeros((n, n))
    rng = np.random.default_rng(seed)
    white = rng.standard_normal((n, n))
    dx = 2 * extent * pupil_radius_mm / n
    f = np.fft.fftfreq(n, d=dx)
    fx, fy = np.meshgrid(f, f, indexing="xy")
    # Gaussian covariance exp(-r^2 / lc^2) -> Gaussian amplitude filter
    filt = np.exp(-(np.pi * correlation_length_mm) ** 2 * (fx**2 + fy**2) / 2)
    surf = np.real(np.fft.ifft2(np.fft.fft2(white) * filt))
    c = pupil_coords(n, extent)
    mask = c[None, :] ** 2 + c[:, None] ** 2 <= 1.0
    surf = surf - surf[mask].mean()
    surf *= rms_target_nm / np.sqrt(np.mean(surf[mask] ** 2))
    return np.where(mask, surf, 0.0)


def surface_phase(error_nm: np.ndarray, index: float, wavelength_nm: float) -> np.ndarray:
    """Transmitted-wavefront phase (rad) of a refractive surface error."""
    return 2 * np.pi * (index - 1.0) * error_nm / wavelength_nm
