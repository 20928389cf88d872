"""Carrier-plus-sideband cavity scans.

A phase-modulated probe laser produces a triplet of cavity resonances
whose known frequency spacing acts as a ruler for the scan axis.  The
same triplet fit calibrates the cavity linewidth and tracks the resonance
position sweep by sweep for vibration measurements.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks, peak_widths

from .fitting import FitError, MeasuredValue, least_squares
from .units import from_ghz
from .vibration import DetuningSeries

__all__ = [
    "Sweep",
    "lorentzian_peak",
    "triplet_model",
    "fit_triplet",
    "SidebandFit",
    "fit_sideband_scan",
    "finesse_from_length_linewidth",
    "resonance_sweep_detunings",
]


@dataclass
class Sweep:
    """One cavity-length sweep: scan axis, transmitted signal, metadata."""

    x: np.ndarray
    signal: np.ndarray
    direction: int = 1
    time: float = 0.0


def lorentzian_peak(x, center, fwhm):
    """Unit-height Lorentzian."""
    return 1.0 / (1.0 + 4.0 * ((np.asarray(x) - center) / fwhm) ** 2)


def triplet_model(x, center, spacing, fwhm, a_carrier, a_side, baseline):
    return (baseline + a_carrier * lorentzian_peak(x, center, fwhm)
            + a_side * (lorentzian_peak(x, center - spacing, fwhm)
                        + lorentzian_peak(x, center + spacing, fwhm)))


def _triplet_guess(x, y):
    base = float(np.percentile(y, 10))
    h = y - base
    peaks, props = find_peaks(h, prominence=0.05 * h.max())
    if peaks.size < 3:
        raise FitError(f"found {peaks.size} resolvable peaks, need a carrier and two sidebands")
    top = peaks[np.argsort(props["prominences"])[-3:]]
    top.sort()
    dx = np.mean(np.diff(x))
    width = peak_widths(h, [top[1]], rel_height=0.5)[0][0] * abs(dx)
    return {
        "center": float(x[top[1]]),
        "spacing": float(abs(x[top[2]] - x[top[0]]) / 2),
        "fwhm": float(max(width, 2 * abs(dx))),
        "a_carrier": float(h[top[1]]),
        "a_side": float(0.5 * (h[top[0]] + h[top[2]])),
        "baseline": base,
    }


def fit_triplet(x, y, sigma=None, p0=None):
    """Three Lorentzians of common width at center and center +/- spacing."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(x)
    x, y = x[order], y[order]
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)[order]
    p0 = p0 or _triplet_guess(x, y)
    lo = [-np.inf, 0.0, 0.0, 0.0, 0.0, -np.inf]
    return least_squares(triplet_model, x, y, p0, sigma=sigma, bounds=(lo, [np.inf] * 6))


@dataclass
class SidebandFit:
    kappa: MeasuredValue             # rad/s
    linewidth_ghz: MeasuredValue     # kappa / 2pi in GHz
    length_linewidth: MeasuredValue  # pm, when a slope is given
    finesse: float
    fit: object


def finesse_from_length_linewidth(wavelength, length_linewidth):
    """Finesse with the length-domain free spectral range lambda/2."""
    return wavelength / (2 * length_linewidth)


def fit_sideband_scan(x, y, sideband_spacing, slope=None, fsr=None, wavelength=None, sigma=None):
    """Cavity linewidth from a scan over a carrier with two sidebands.

    Parameters
    ----------
    x, y : array_like
        Scan axis (any monotone unit) and transmitted signal.
    sideband_spacing : float
        Modulation frequency in GHz (sidebands at +/- this value).
    slope : float, optional
        Resonance slope in pm/GHz for the length linewidth.
    fsr : float, optional
        Free spectral range in GHz; gives finesse = fsr / linewidth.
    wavelength : float, optional
        Wavelength in m; with ``slope`` gives the length-domain finesse
        lambda / (2 * length linewidth) when ``fsr`` is not supplied.
    """
    if sideband_spacing <= 0:
        raise ValueError("sideband spacing must be positive")
    res = fit_triplet(x, y, sigma)
    w, s = res.params["fwhm"], res.params["spacing"]
    cov = res.covariance
    names = res.names
    iw, is_ = names.index("fwhm"), names.index("spacing")
    ratio = w / s
    rel2 = cov[iw, iw] / w**2 + cov[is_, is_] / s**2 - 2 * cov[iw, is_] / (w * s)
    lw = ratio * sideband_spacing
    lw_err = abs(lw) * np.sqrt(max(rel2, 0.0))
    length = MeasuredValue(lw * slope, lw_err * slope) if slope is not None else None
    if fsr is not None:
        finesse = fsr / lw
    elif slope is not None and wavelength is not None:
        finesse = finesse_from_length_linewidth(wavelength, lw * slope * 1e-12)
    else:
        finesse = None
    return SidebandFit(kappa=MeasuredValue(from_ghz(lw), from_ghz(lw_err)),
                       linewidth_ghz=MeasuredValue(lw, lw_err), length_linewidth=length,
                       finesse=finesse, fit=res)


def resonance_sweep_detunings(traces, sideband_spacing, separate_directions=True):
    """Per-sweep resonance detunings in GHz.

    Each trace is fitted with the triplet model; its carrier position is
    converted to frequency with that trace's own sideband ruler
    (outer-sideband separation = 2 * spacing).  Detunings are referenced to
    the mean position of sweeps in the same direction, which cancels a
    constant up/down hysteresis offset; ``separate_directions=False``
    references everything to the common mean instead.

    Returns
    -------
    DetuningSeries (unit GHz), ordered by sweep time, with
    ``quiet_mask`` all False.
    """
    if sideband_spacing <= 0:
        raise ValueError("sideband spacing must be positive")
    traces = sorted(traces, key=lambda tr: tr.time)
    pos, per_ghz, dirs, times = [], [], [], []
    for tr in traces:
        res = fit_triplet(tr.x, tr.signal)
        pos.append(res.params["center"])
        per_ghz.append(res.params["spacing"] / sideband_spacing)
        dirs.append(tr.direction)
        times.append(tr.time)
    pos, per_ghz, dirs = map(np.asarray, (pos, per_ghz, dirs))
    ref = np.empty_like(pos)
    if separate_directions:
        for d in np.unique(dirs):
            sel = dirs == d
            ref[sel] = pos[sel].mean()
    else:
        ref[:] = pos.mean()
    det = (pos - ref) / per_ghz
    return DetuningSeries(np.asarray(times), det, np.zeros(det.size, bool), unit="GHz")
