"""Carrier Rabi thermometry, heating rates and heating-limited gate error."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import constants as sc
from scipy.optimize import least_squares

from .trap import AMU

TAIL_BOUND = 1e-10


class TruncationError(RuntimeError):
    pass


class FitError(RuntimeError):
    pass


class LambDickeWarning(UserWarning):
    pass


def lamb_dicke(wavelength_nm: float, mass_u: float, secular_freq_kHz: float,
               projection: float = 1.0) -> float:
    if wavelength_nm <= 0 or mass_u <= 0 or secular_freq_kHz <= 0:
        raise ValueError("wavelength, mass and frequency must be positive")
    if not 0 <= projection <= 1:
        raise ValueError("projection must be in [0, 1]")
    k = 2 * math.pi / (wavelength_nm * 1e-9)
    omega = 2 * math.pi * secular_freq_kHz * 1e3
    return k * projection * math.sqrt(sc.hbar / (2 * mass_u * AMU * omega))


def thermal_populations(nbar: float, n_max: int | None = None, tail: float = TAIL_BOUND) -> np.ndarray:
    """p_n = nbar^n / (nbar+1)^(n+1), truncated once the remaining mass < tail."""
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    if nbar == 0:
        return np.array([1.0])
    r = nbar / (nbar + 1)
    # tail mass beyond N-1 is r^N
    need = int(math.ceil(math.log(tail) / math.log(r)))
    if n_max is not None and need > n_max + 1:
        raise TruncationError(f"thermal tail {r ** (n_max + 1):.2e} above {tail} at n_max={n_max}")
    n = np.arange(need)
    return (1 - r) * r**n


def carrier_decay(omega0: float, eta: float, nbar: float, t_us, n_max: int | None = 20000) -> np.ndarray:
    """Thermally averaged carrier excitation, P(t) = sum_n p_n sin^2(omega0 (1 - eta^2 n) t / 2)."""
    if eta**2 * (nbar + 1) > 0.3:
        warnings.warn("outside the Lamb-Dicke regime (eta^2 (nbar+1) > 0.3)", LambDickeWarning)
    p = thermal_populations(nbar, n_max)
    t = np.asarray(t_us, float) * 1e-6
    n = np.arange(len(p))
    om = omega0 * (1 - eta**2 * n)
    return np.sin(np.outer(t, om) / 2) ** 2 @ p


def carrier_decay_closed(omega0: float, eta: float, nbar: float, t_us) -> np.ndarray:
    """Geometric-series form: sum_n p_n e^{i w_n t} = (1-r) e^{i w0 t} / (1 - r e^{-i w0 eta^2 t})."""
    t = np.asarray(t_us, float) * 1e-6
    if nbar == 0:
        return np.sin(omega0 * t / 2) ** 2
    r = nbar / (nbar + 1)
    s = (1 - r) * np.exp(1j * omega0 * t) / (1 - r * np.exp(-1j * omega0 * eta**2 * t))
    return 0.5 * (1 - s.real)


def carrier_decay_modes(omega0: float, etas, nbars, t_us) -> np.ndarray:
    """Carrier excitation with several thermal modes coupled to the probe.

    Each mode shifts the Rabi frequency by -omega0 eta_m^2 n_m (lowest order), so the
    thermal average factorises into one geometric series per mode. A single mode
    reduces to carrier_decay_closed; a mode with eta = 0 drops out.
    """
    etas = np.atleast_1d(np.asarray(etas, float))
    nbars = np.atleast_1d(np.asarray(nbars, float))
    if etas.shape != nbars.shape:
        raise ValueError("etas and nbars must have the same length")
    if np.any(nbars < 0):
        raise ValueError("nbar must be >= 0")
    t = np.asarray(t_us, float) * 1e-6
    s = np.exp(1j * omega0 * t)
    for eta, nb in zip(etas, nbars):
        r = nb / (nb + 1)
        s = s * (1 - r) / (1 - r * np.exp(-1j * omega0 * eta**2 * t))
    return 0.5 * (1 - s.real)


@dataclass
class NbarFit:
    nbar: float
    omega0: float
    residual_rms: float
    starts: int


def _initial_omega(t_us, p):
    # dominant frequency of the mean-removed curve
    t = np.asarray(t_us) * 1e-6
    y = p - p.mean()
    freqs = np.linspace(0.2, 4, 400) * 2 * np.pi / (t[-1] - t[0]) * 4
    power = [abs(np.sum(y * np.exp(-1j * f * t))) for f in freqs]
    return float(freqs[int(np.argmax(power))])


def fit_nbar(t_us, p, eta: float, omega0: float | None = None, fix_omega: bool = False,
             nbar_guess: float | None = None, spectators=()) -> NbarFit:
    """Least-squares n-bar (and optionally omega0) from a carrier flop.

    ``spectators`` is a sequence of (eta, nbar) pairs for further modes held fixed
    in the model (see carrier_decay_modes); the fit is for the first mode only.

    Multi-start: the initial guess and +-20 % around it in both parameters.
    Iterates may leave the Lamb-Dicke regime; only the final estimate is checked.
    """
    t_us = np.asarray(t_us, float)
    p = np.asarray(p, float)
    if len(t_us) < 10:
        raise FitError("need at least 10 samples")
    if np.ptp(p) < 1e-6:
        raise FitError("flat curve: nothing to fit")
    w0 = omega0 if omega0 is not None else _initial_omega(t_us, p)
    if fix_omega and omega0 is None:
        raise ValueError("fix_omega requires omega0")
    cycles = w0 * (t_us.max() - t_us.min()) * 1e-6 / (2 * np.pi)
    if cycles < 3:
        raise FitError(f"data span {cycles:.2f} Rabi cycles; need >= 3")
    if nbar_guess is None:
        # contrast at the third cycle ~ exp(-(eta^2 nbar w0 t)^2 / 2)-like decay; crude inversion
        t3 = 3 * 2 * np.pi / w0 * 1e6
        sel = np.abs(t_us - t3) < np.pi / w0 * 1e6
        contrast = np.ptp(p[sel]) if sel.sum() >= 2 else 1.0
        nbar_guess = max(0.5, (1 - min(contrast, 0.999)) / (eta**2 * w0 * t3 * 1e-6 + 1e-12))

    spec_eta = [float(e) for e, _ in spectators]
    spec_nbar = [float(n) for _, n in spectators]

    def resid(x):
        nb = x[0]
        w = w0 if fix_omega else x[1]
        # closed form: equal to the truncated sum within the tail bound, and much cheaper
        if spectators:
            return carrier_decay_modes(w, [eta] + spec_eta, [max(nb, 0.0)] + spec_nbar, t_us) - p
        return carrier_decay_closed(w, eta, max(nb, 0.0), t_us) - p

    best = None
    starts = 0
    for fn in (1.0, 0.8, 1.2):
        for fw in ((1.0,) if fix_omega else (1.0, 0.8, 1.2)):
            x0 = [nbar_guess * fn] if fix_omega else [nbar_guess * fn, w0 * fw]
            lb = [0.0] if fix_omega else [0.0, 0.0]
            sol = least_squares(resid, x0, bounds=(lb, np.inf), xtol=1e-14, ftol=1e-14, gtol=1e-14,
                                x_scale="jac")
            starts += 1
            if best is None or sol.cost < best.cost:
                best = sol
    if not best.success:
        raise FitError(best.message)
    w = w0 if fix_omega else float(best.x[1])
    if eta**2 * (best.x[0] + 1) > 0.3:
        warnings.warn("fitted n-bar is outside the Lamb-Dicke regime (eta^2 (nbar+1) > 0.3)", LambDickeWarning)
    return NbarFit(float(best.x[0]), w, float(np.sqrt(2 * best.cost / len(p))), starts)


@dataclass
class HeatingFit:
    rate: float  # quanta/s
    rate_stderr: float
    intercept: float
    delays_ms: np.ndarray
    nbars: np.ndarray


def heating_rate(delays_ms, nbars) -> HeatingFit:
    """Ordinary least-squares slope of n-bar against delay, with its standard error."""
    x = np.asarray(delays_ms, float) * 1e-3
    y = np.asarray(nbars, float)
    if len(x) != len(y):
        raise ValueError("delays and nbars differ in length")
    if len(x) < 3:
        raise ValueError("need at least 3 delay points")
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise ValueError("delays are all equal")
    slope = np.sum((x - xm) * (y - ym)) / sxx
    icpt = ym - slope * xm
    res = y - (icpt + slope * x)
    s2 = np.sum(res**2) / (len(x) - 2)
    return HeatingFit(float(slope), float(math.sqrt(s2 / sxx)), float(icpt),
                      np.asarray(delays_ms, float), y)


def nbar_noise_for_stderr(delays_ms, target_stderr: float) -> float:
    """Gaussian n-bar noise sigma whose expected OLS slope stderr is ``target_stderr`` (quanta/s)."""
    x = np.asarray(delays_ms, float) * 1e-3
    sxx = np.sum((x - x.mean()) ** 2)
    if sxx == 0:
        raise ValueError("delays are all equal")
    return float(target_stderr * math.sqrt(sxx))


def gate_infidelity(rate: float, gate_time_us: float) -> float:
    """First-order heating-limited gate error, rate * tau / 2."""
    if rate < 0 or gate_time_us < 0:
        raise ValueError("rate and gate time must be >= 0")
    return rate * gate_time_us * 1e-6 / 2


def gate_infidelity_uncertainty(rate_stderr: float, gate_time_us: float) -> float:
    return gate_infidelity(rate_stderr, gate_time_us)
