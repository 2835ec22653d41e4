"""Excess micromotion: modulation index from Rabi-frequency ratios and
sideband lineshapes."""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.optimize import brentq
from scipy.special import jv, jn_zeros

J0_FIRST_ZERO = float(jn_zeros(0, 1)[0])  # 2.4048...
BETA_MAX = 2.4  # bracket upper end, below the first J0 zero


class RegimeWarning(UserWarning):
    pass


def bessel_ratio(beta):
    """J1(beta) / J0(beta)."""
    return jv(1, beta) / jv(0, beta)


def beta_from_ratio(ratio: float) -> float:
    """Invert Omega_{+-1} / Omega_0 = J1(beta)/J0(beta) on [0, 2.4)."""
    if not math.isfinite(ratio) or ratio < 0:
        raise ValueError(f"ratio must be finite and >= 0, got {ratio}")
    if ratio == 0:
        return 0.0
    rmax = float(bessel_ratio(BETA_MAX))
    if ratio >= rmax:
        raise ValueError(f"ratio {ratio} outside the invertible range [0, {rmax:.4g})")
    # absolute tolerance scaled to the root (beta ~ 2 ratio) keeps small-beta precision relative
    return brentq(lambda b: bessel_ratio(b) - ratio, 0.0, BETA_MAX, xtol=ratio * 1e-16, rtol=1e-15,
                  maxiter=200)


def rabi_probability(omega_eff, detuning, t):
    """Two-level Rabi excitation; angular units consistent with t."""
    omega_eff = np.asarray(omega_eff, float)
    detuning = np.asarray(detuning, float)
    w = np.sqrt(omega_eff**2 + detuning**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(w > 0, omega_eff**2 / np.where(w > 0, w, 1) ** 2, 0.0) * np.sin(w * t / 2) ** 2
    return p


def sideband_spectrum(beta: float, omega0: float, probe_time_us: float, detuning_kHz,
                      order: int = 1, micromotion_freq_kHz: float | None = None) -> np.ndarray:
    """Excitation probability vs detuning (kHz, cyclic) from the k-th micromotion sideband.

    ``omega0`` is the carrier Rabi frequency in rad/s. The effective Rabi
    frequency on sideband k is |J_k(beta)| omega0. If the sideband spacing
    is given, a warning is issued when it is not well resolved.
    """
    if beta < 0 or omega0 < 0 or probe_time_us < 0:
        raise ValueError("beta, omega0 and probe time must be >= 0")
    om = abs(float(jv(order, beta))) * omega0
    if micromotion_freq_kHz is not None:
        spacing = 2 * math.pi * micromotion_freq_kHz * 1e3
        if om > spacing / 10:
            warnings.warn("sideband Rabi frequency exceeds a tenth of the sideband spacing", RegimeWarning)
    delta = 2 * np.pi * np.asarray(detuning_kHz, float) * 1e3
    return rabi_probability(om, delta, probe_time_us * 1e-6)


def pi_time_to_rabi(pi_time_us: float) -> float:
    """Carrier Rabi frequency (rad/s) from its pi time."""
    return math.pi / (pi_time_us * 1e-6)


def wavevector(wavelength_nm: float) -> float:
    """k in rad/um."""
    return 2 * math.pi / (wavelength_nm * 1e-3)


def displacement_to_beta(displacement_um: float, q_radial: float, k_rad_per_um: float,
                         projection: float) -> float:
    """beta = k * projection * (q/2) * displacement."""
    return k_rad_per_um * projection * (abs(q_radial) / 2) * displacement_um


def beta_to_displacement(beta: float, q_radial: float, k_rad_per_um: float, projection: float) -> float:
    denom = k_rad_per_um * projection * abs(q_radial) / 2
    if denom == 0:
        raise ValueError("q, k and projection must be nonzero to invert")
    return beta / denom
