"""Cavity-length vibration statistics: PSD, cumulative RMS and histograms."""

from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.special import ndtr

from .fitting import least_squares
from .lineshape import fit_voigt_fixed_gaussian, length_frequency_convert

__all__ = [
    "DetuningSeries",
    "VibrationSummary",
    "contiguous_runs",
    "welch_psd",
    "psd_cumulative_rms",
    "fit_gaussian_histogram",
    "summarize_vibrations",
]


@dataclass
class DetuningSeries:
    times: np.ndarray
    detunings: np.ndarray
    quiet_mask: np.ndarray = None
    unit: str = "pm"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.detunings = np.asarray(self.detunings, dtype=float)
        if self.quiet_mask is None:
            self.quiet_mask = np.zeros(self.times.size, bool)
        self.quiet_mask = np.asarray(self.quiet_mask, dtype=bool)
        if not (self.times.size == self.detunings.size == self.quiet_mask.size):
            raise ValueError("times, detunings and quiet_mask must have equal lengths")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.unit not in ("pm", "GHz"):
            raise ValueError(f"unit must be 'pm' or 'GHz', got {self.unit!r}")

    def converted(self, unit, slope):
        """Copy in ``unit`` using the resonance slope (pm/GHz)."""
        if unit == self.unit:
            return DetuningSeries(self.times, self.detunings.copy(), self.quiet_mask.copy(), unit)
        to = "length" if unit == "pm" else "frequency"
        return DetuningSeries(self.times, length_frequency_convert(self.detunings, slope, to=to),
                              self.quiet_mask.copy(), unit)


@dataclass
class VibrationSummary:
    rms_full: float
    rms_quiet: float
    frequencies: np.ndarray
    cumulative_rms_full: np.ndarray
    cumulative_rms_quiet: np.ndarray
    sigma_g: float = None
    fwhm_l: float = None
    fits: dict = field(default_factory=dict, repr=False)


def contiguous_runs(mask):
    """(start, stop) index pairs of the True runs in ``mask``."""
    m = np.concatenate([[False], np.asarray(mask, bool), [False]])
    d = np.diff(m.astype(int))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def welch_psd(x, fs, nperseg):
    """One-sided PSD, Hann window, 50 % overlap; integrates to the variance."""
    return signal.welch(x, fs=fs, window="hann", nperseg=nperseg, noverlap=nperseg // 2,
                        detrend="constant", scaling="density", return_onesided=True)


def _uniform(series, resample):
    t, x = series.times, series.detunings
    dt = np.diff(t)
    if np.ptp(dt) <= 1e-6 * dt.mean():
        return t, x, series.quiet_mask, 1.0 / dt.mean()
    if not resample:
        raise ValueError("series is not uniformly sampled; pass resample=True")
    step = np.median(dt)
    tu = np.arange(t[0], t[-1] + 0.5 * step, step)
    xu = np.interp(tu, t, x)
    qu = np.interp(tu, t, series.quiet_mask.astype(float)) > 0.5
    return tu, xu, qu, 1.0 / step


def _cumulative(f, psd, band):
    df = f[1] - f[0]
    sel = (f >= band[0]) & (f <= band[1])
    cum = np.sqrt(np.cumsum(np.where(sel, psd, 0.0)) * df)
    return cum


def psd_cumulative_rms(series, band, nperseg=1024, resample=False):
    """In-band RMS motion from cumulative integrals of the PSD.

    The full series gives ``rms_full``; the quiet-period runs (from the
    series mask) are transformed separately, their PSDs averaged with
    weights equal to the number of Welch segments in each run, giving
    ``rms_quiet``.  Runs shorter than ``nperseg`` are skipped.

    Parameters
    ----------
    series : DetuningSeries
    band : (f_lo, f_hi) in Hz
    nperseg : int
    resample : bool
        Linearly resample a non-uniform series onto its median step.
    """
    t, x, quiet, fs = _uniform(series, resample)
    f_lo, f_hi = band
    if f_hi > fs / 2 * (1 + 1e-9) or f_lo < 0 or f_hi <= f_lo:
        raise ValueError(f"band {band} must lie within [0, Nyquist={fs / 2:g} Hz]")
    nperseg = min(nperseg, x.size)
    f, p_full = welch_psd(x, fs, nperseg)

    if not quiet.any():
        raise ValueError("quiet mask is empty")
    acc, weight = np.zeros_like(p_full), 0
    for a, b in contiguous_runs(quiet):
        if b - a < nperseg:
            continue
        _, p = welch_psd(x[a:b], fs, nperseg)
        nseg = 1 + (b - a - nperseg) // (nperseg - nperseg // 2)
        acc += nseg * p
        weight += nseg
    if weight == 0:
        raise ValueError(f"no quiet run is at least nperseg={nperseg} samples long")
    p_quiet = acc / weight

    cf = _cumulative(f, p_full, band)
    cq = _cumulative(f, p_quiet, band)
    return VibrationSummary(rms_full=float(cf[-1]), rms_quiet=float(cq[-1]), frequencies=f,
                            cumulative_rms_full=cf, cumulative_rms_quiet=cq,
                            fits={"psd_full": p_full, "psd_quiet": p_quiet})


def _gauss_bins(lo, hi, center, sigma, area):
    return area * (ndtr((hi - center) / sigma) - ndtr((lo - center) / sigma))


def fit_gaussian_histogram(bin_edges, counts):
    """Poisson maximum-likelihood Gaussian fit; parameters center, sigma, area."""
    edges = np.asarray(bin_edges, dtype=float)
    n = np.asarray(counts, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    mu = np.sum(mid * n) / n.sum()
    sd = np.sqrt(np.sum(n * (mid - mu) ** 2) / n.sum())
    return least_squares(lambda _x, c, s, a: _gauss_bins(lo, hi, c, s, a), mid, n,
                         {"center": mu, "sigma": sd, "area": n.sum()}, poisson=True,
                         bounds=([-np.inf, 1e-12, 0.0], [np.inf, np.inf, np.inf]))


def summarize_vibrations(series, band, bin_width, span=None, nperseg=1024):
    """PSD summary plus the two histogram fits.

    The quiet-period detunings are fitted with a Gaussian; the full-cycle
    detunings with a Voigt whose Gaussian width is fixed to that value.
    """
    summary = psd_cumulative_rms(series, band, nperseg=nperseg)
    d = series.detunings
    span = span if span is not None else 10 * np.std(d[series.quiet_mask])
    edges = np.arange(-span, span + 0.5 * bin_width, bin_width) + np.median(d)
    q, _ = np.histogram(d[series.quiet_mask], edges)
    gfit = fit_gaussian_histogram(edges, q)
    full, _ = np.histogram(d, edges)
    vfit = fit_voigt_fixed_gaussian(edges, full, gfit.params["sigma"])
    summary.sigma_g = gfit.params["sigma"]
    summary.fwhm_l = vfit.params["fwhm_l"]
    summary.fits.update(gaussian=gfit, voigt=vfit)
    return summary
