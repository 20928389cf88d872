"""Spectral line profiles and the linewidth bookkeeping built on them."""

from dataclasses import dataclass

import numpy as np
from scipy.special import voigt_profile

from .fitting import FitError, MeasuredValue, least_squares

__all__ = [
    "LineProfile",
    "voigt_density",
    "voigt_fwhm",
    "fit_voigt_fixed_gaussian",
    "length_frequency_convert",
    "deconvolve_emitter_linewidth",
]


@dataclass(frozen=True)
class LineProfile:
    """Peak described by a Gaussian sigma and a Lorentzian FWHM.

    ``amplitude`` is the peak area in the units of the axis.
    """

    center: float = 0.0
    sigma_g: float = 0.0
    fwhm_l: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.sigma_g < 0 or self.fwhm_l < 0:
            raise ValueError("widths must be non-negative")
        if self.sigma_g == 0 and self.fwhm_l == 0:
            raise ValueError("at least one width must be positive")

    def __call__(self, x):
        return voigt_density(x, self)


def voigt_density(x, profile):
    """Gaussian-Lorentzian convolution evaluated at ``x``.

    Uses the Faddeeva function (via ``scipy.special.voigt_profile``), so it
    stays accurate in both pure limits.
    """
    return profile.amplitude * voigt_profile(np.asarray(x, dtype=float) - profile.center,
                                             profile.sigma_g, profile.fwhm_l / 2)


def voigt_fwhm(sigma_g, fwhm_l):
    """Olivero-Longbothum approximation to the Voigt FWHM (~2e-4 relative)."""
    fg = 2 * np.sqrt(2 * np.log(2)) * sigma_g
    return 0.5346 * fwhm_l + np.sqrt(0.2166 * fwhm_l**2 + fg**2)


def fit_voigt_fixed_gaussian(bin_edges, counts, sigma_fixed, p0=None):
    """Voigt fit to a histogram with the Gaussian width frozen.

    Poisson maximum likelihood on the bin counts (deviance residuals), with
    the model integrated over each bin by three-point Simpson.  Weighting
    by the observed counts instead would bias the Lorentzian width low
    through the sparsely populated tail bins.

    Parameters
    ----------
    bin_edges : array_like, shape (n+1,)
    counts : array_like, shape (n,)
    sigma_fixed : float
        Gaussian standard deviation, same units as the bin edges.

    Returns
    -------
    FitResult
        Parameters ``center``, ``fwhm_l`` and ``area``; ``info['profile']``
        holds the fitted :class:`LineProfile`.
    """
    edges = np.asarray(bin_edges, dtype=float)
    n = np.asarray(counts, dtype=float)
    if edges.size != n.size + 1:
        raise ValueError("need len(bin_edges) == len(counts) + 1")
    if np.count_nonzero(n) < 10:
        raise FitError("histogram needs at least 10 populated bins")
    if sigma_fixed <= 0:
        raise ValueError("sigma_fixed must be positive")
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    width = hi - lo

    def model(_x, center, fwhm_l, area):
        prof = LineProfile(center, sigma_fixed, max(fwhm_l, 0.0), area)
        return width * (prof(lo) + 4 * prof(mid) + prof(hi)) / 6

    if p0 is None:
        total = n.sum()
        center = float(np.sum(mid * n) / total)
        # half-maximum width of the histogram bounds the total width
        above = mid[n >= n.max() / 2]
        fw = max(float(above.max() - above.min()), width.max())
        fg = 2.3548 * sigma_fixed
        fl0 = max((fw**2 - fg**2) / fw, 0.05 * fg) if fw > fg else 0.1 * fg
        p0 = {"center": center, "fwhm_l": fl0, "area": float(total)}
    res = least_squares(model, mid, n, p0, poisson=True,
                        bounds=([-np.inf, 0.0, 0.0], [np.inf, np.inf, np.inf]))
    res.info["profile"] = LineProfile(res.params["center"], sigma_fixed, res.params["fwhm_l"],
                                      res.params["area"])
    return res


def length_frequency_convert(value, slope, to="frequency"):
    """Convert between cavity-length and frequency detunings.

    ``slope`` is the resonance slope in pm/GHz.  ``to='frequency'`` maps pm
    to GHz (value / slope); ``to='length'`` maps GHz to pm.
    """
    if slope <= 0:
        raise ValueError("slope must be positive")
    if to == "frequency":
        return np.asarray(value) / slope if np.ndim(value) else value / slope
    if to == "length":
        return np.asarray(value) * slope if np.ndim(value) else value * slope
    raise ValueError(f"unknown target {to!r}")


def deconvolve_emitter_linewidth(delta_e, delta_l, kappa_prime, tol=0.0):
    """Emitter Lorentzian linewidth with the vibration contribution removed.

    Delta_cw = Delta_e - (Delta_l - kappa').  Arguments are plain numbers or
    :class:`MeasuredValue`; with any uncertainty present the result is a
    MeasuredValue whose error is the quadrature sum of the input errors.

    The excess Delta_l - kappa' is the vibration broadening of the reference
    laser peak and cannot be negative by more than ``tol`` (plus the
    combined input error when given).
    """
    vals = [MeasuredValue(*v) if isinstance(v, MeasuredValue) else MeasuredValue(float(v), 0.0)
            for v in (delta_e, delta_l, kappa_prime)]
    e, l, k = vals
    if min(e.value, l.value, k.value) <= 0:
        raise ValueError("linewidths must be positive")
    excess = l.value - k.value
    allowance = tol + np.hypot(l.sigma, k.sigma)
    if excess < -allowance:
        raise ValueError(f"reference linewidth {l.value} below cavity linewidth {k.value}: "
                         "inconsistent calibration")
    value = e.value - excess
    sigma = float(np.sqrt(e.sigma**2 + l.sigma**2 + k.sigma**2))
    if any(isinstance(v, MeasuredValue) for v in (delta_e, delta_l, kappa_prime)):
        return MeasuredValue(value, sigma)
    return value
