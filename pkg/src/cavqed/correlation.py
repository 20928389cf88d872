"""Photon correlations and time-tag post-selection.

Covers the three-level g2 model with background and detector jitter, the
Hanbury Brown-Twiss coincidence histogram restricted to bright
acquisition windows, and lifetime fits grouped by the count rate of each
acquisition window.
"""

from dataclasses import dataclass, field

import numpy as np

from .decay import TcspcHistogram, exp_gauss, fit_emg
from .fitting import FitError, MeasuredValue, least_squares, odr_linear

__all__ = [
    "G2Params",
    "g2_ideal",
    "g2_measured",
    "fit_g2",
    "TimeTagStream",
    "HbtResult",
    "hbt_postselect",
    "GatedRates",
    "intensity_gated_rates",
    "fit_gated_rates",
]

PS = 1e-12


@dataclass(frozen=True)
class G2Params:
    """Three-level bunching model with background fraction and jitter.

    ``s`` is the fraction of detected photons coming from the emitter;
    ``sigma_t`` the standard deviation of the two-detector timing jitter;
    ``norm`` the overall scale N.
    """

    a: float
    tau1: float
    tau2: float
    s: float = 1.0
    sigma_t: float = 0.0
    norm: float = 1.0

    def __post_init__(self):
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise ValueError("tau1 and tau2 must be positive")
        if not 0 <= self.s <= 1:
            raise ValueError("s must lie in [0, 1]")
        if self.a < 0 or self.sigma_t < 0:
            raise ValueError("a and sigma_t must be non-negative")


def g2_ideal(tau, a, tau1, tau2):
    """1 - (1 + a) exp(-|tau|/tau1) + a exp(-|tau|/tau2)."""
    if not (tau1 > 0 and tau2 > 0):
        raise ValueError("tau1 and tau2 must be positive")
    t = np.abs(np.asarray(tau, dtype=float))
    return 1 - (1 + a) * np.exp(-t / tau1) + a * np.exp(-t / tau2)


def _two_sided(tau, rate, sigma):
    # exp(-rate |t|) convolved with a unit-area Gaussian, in closed form
    return exp_gauss(tau, rate, sigma) + exp_gauss(-np.asarray(tau), rate, sigma)


def g2_measured(tau, params):
    """Background-corrected g2 convolved with the instrument response.

    N * G_sigma * (s^2 g2(tau) + 1 - s^2), G_sigma a unit-area Gaussian, so
    N is the level approached at long delays.
    """
    p = params
    tau = np.asarray(tau, dtype=float)
    if p.sigma_t == 0:
        core = g2_ideal(tau, p.a, p.tau1, p.tau2)
    else:
        core = (1 - (1 + p.a) * _two_sided(tau, 1 / p.tau1, p.sigma_t)
                + p.a * _two_sided(tau, 1 / p.tau2, p.sigma_t))
    return p.norm * (p.s**2 * core + 1 - p.s**2)


def fit_g2(hbt, s, fit_range=None, p0=None, bunching=True):
    """Fit the convolved three-level model to coincidence counts.

    The model for each bin is the uncorrelated expectation times
    g2_measured at the bin centre; bins within +/- ``fit_range`` of zero
    delay (default: the whole histogram) enter a Poisson likelihood.  ``s``
    is held fixed.  The bunching time is only identifiable when the range
    extends a few tau2 beyond zero delay; with ``bunching=False`` the
    model is held at a = 0 (two-level emitter) and tau2 is not fitted.

    Returns
    -------
    FitResult
        Parameters ``a``, ``tau1``, ``tau2``, ``sigma_t`` and ``norm``;
        ``info['g2_0']`` holds g2_measured(0) at the fitted values.
    """
    t = hbt.histogram.centers
    sel = np.abs(t) <= (fit_range if fit_range is not None else np.inf)
    if np.count_nonzero(sel) < 8:
        raise ValueError("fewer than 8 bins inside the fit range")
    tt, n, e = t[sel], np.asarray(hbt.histogram.counts, float)[sel], hbt.expected[sel]
    w = float(np.mean(hbt.histogram.widths))

    if p0 is None:
        tail = hbt.normalized[np.abs(t) > 0.5 * t.max()]
        norm0 = float(np.nanmean(tail)) if tail.size else 1.0
        p0 = {"a": 0.5, "tau1": 1e-9, "tau2": 20e-9, "sigma_t": 2 * w, "norm": norm0}
    p0 = dict(p0)
    if bunching:
        def model(x, a, tau1, tau2, sigma_t, norm):
            return e * g2_measured(x, G2Params(a, tau1, tau2, s, sigma_t, norm))
        scale = [1.0, 1e-9, 1e-8, max(w, 1e-12), 1.0]
        bounds = ([0, 1e-12, 1e-12, 0, 0], [np.inf] * 5)
    else:
        p0.pop("a", None)
        p0.pop("tau2", None)

        def model(x, tau1, sigma_t, norm):
            return e * g2_measured(x, G2Params(0.0, tau1, tau1, s, sigma_t, norm))
        scale = [1e-9, max(w, 1e-12), 1.0]
        bounds = ([1e-12, 0, 0], [np.inf] * 3)
    res = least_squares(model, tt, n, p0, poisson=True, scale=scale, bounds=bounds)
    q = dict(res.params)
    q.setdefault("a", 0.0)
    q.setdefault("tau2", q["tau1"])
    res.info["g2_0"] = float(g2_measured(0.0, G2Params(q["a"], q["tau1"], q["tau2"], s,
                                                         q["sigma_t"], q["norm"])))
    return res


@dataclass
class TimeTagStream:
    """Detection records: integer picosecond timestamps and channel numbers."""

    timestamps: np.ndarray
    channels: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        if self.timestamps.shape != self.channels.shape or self.timestamps.ndim != 1:
            raise ValueError("timestamps and channels must be 1-D of equal length")
        for c in np.unique(self.channels):
            t = self.timestamps[self.channels == c]
            bad = np.flatnonzero(np.diff(t) < 0)
            if bad.size:
                idx = np.flatnonzero(self.channels == c)[bad[0] + 1]
                raise ValueError(f"channel {c}: timestamp decreases at record {idx}")

    def __len__(self):
        return self.timestamps.size

    @property
    def channel_ids(self):
        return sorted(int(c) for c in np.unique(self.channels))

    def channel(self, c):
        return self.timestamps[self.channels == c]

    @classmethod
    def from_channels(cls, per_channel):
        """Merge ``{channel: timestamps}`` into one time-ordered stream."""
        ts = np.concatenate([np.asarray(t, dtype=np.int64) for t in per_channel.values()])
        ch = np.concatenate([np.full(len(t), c, dtype=np.uint8) for c, t in per_channel.items()])
        order = np.argsort(ts, kind="stable")
        return cls(ts[order], ch[order])

    def between(self, start_ps, stop_ps):
        sel = (self.timestamps >= start_ps) & (self.timestamps < stop_ps)
        return TimeTagStream(self.timestamps[sel], self.channels[sel])


@dataclass
class HbtResult:
    histogram: TcspcHistogram
    normalized: np.ndarray
    expected: np.ndarray
    n_windows: int
    windows_used: np.ndarray = field(repr=False)


def _pair_delays(ta, tb, wa, wb, max_delay):
    """All tb - ta with |tb - ta| <= max_delay and equal window index."""
    if ta.size == 0 or tb.size == 0:
        return np.zeros(0, np.int64)
    lo = np.searchsorted(tb, ta - max_delay, "left")
    hi = np.searchsorted(tb, ta + max_delay, "right")
    # stay inside the A event's window
    wlo = np.searchsorted(wb, wa, "left")
    whi = np.searchsorted(wb, wa, "right")
    lo, hi = np.maximum(lo, wlo), np.minimum(hi, whi)
    n = np.maximum(hi - lo, 0)
    total = int(n.sum())
    if total == 0:
        return np.zeros(0, np.int64)
    starts = np.repeat(lo, n)
    offs = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
    return tb[starts + offs] - np.repeat(ta, n)


def hbt_postselect(stream, window=10e-3, min_counts=50, max_delay=50e-9, bin_width=100e-12,
                   channels=None):
    """Cross-channel coincidence histogram from bright acquisition windows.

    Time is cut into consecutive ``window``-long intervals from t = 0; only
    intervals with more than ``min_counts`` detections (both channels) are
    kept, and only pairs inside the same interval are counted.  Delay is
    t_B - t_A.

    The normalized histogram divides by the count expected for
    uncorrelated detections, sum_w nA nB int_bin (T - |tau|) / T^2 dtau.

    Returns
    -------
    HbtResult
    """
    ids = stream.channel_ids
    if channels is None:
        if len(ids) < 2:
            raise ValueError("coincidence analysis needs two channels")
        channels = (ids[0], ids[1])
    ca, cb = channels
    if ca not in ids or cb not in ids:
        raise ValueError(f"channels {channels} not present in the stream (have {ids})")
    if window <= 0 or max_delay <= 0 or bin_width <= 0:
        raise ValueError("window, max_delay and bin_width must be positive")
    T = int(round(window / PS))
    D = int(round(max_delay / PS))

    ta, tb = stream.channel(ca), stream.channel(cb)
    wa, wb = ta // T, tb // T
    w_all = stream.timestamps // T
    wins, counts = np.unique(w_all, return_counts=True)
    keep = wins[counts > min_counts]
    if keep.size == 0:
        raise ValueError(f"no {window:g} s window has more than {min_counts} counts")
    ma, mb = np.isin(wa, keep), np.isin(wb, keep)
    ta, wa, tb, wb = ta[ma], wa[ma], tb[mb], wb[mb]

    delays = _pair_delays(ta, tb, wa, wb, D)
    nbin = int(np.ceil(max_delay / bin_width))
    edges = np.linspace(-nbin * bin_width, nbin * bin_width, 2 * nbin + 1)
    hist, _ = np.histogram(delays * PS, edges)

    na = np.bincount(np.searchsorted(keep, wa), minlength=keep.size)
    nb = np.bincount(np.searchsorted(keep, wb), minlength=keep.size)
    Ts = T * PS

    def F(x):  # integral of (T - |tau|) / T^2 from 0 to x (x >= 0)
        return (x - x**2 / (2 * Ts)) / Ts

    lo, hi = edges[:-1], edges[1:]
    shape = np.where(lo >= 0, F(np.abs(hi)) - F(np.abs(lo)),
                     np.where(hi <= 0, F(np.abs(lo)) - F(np.abs(hi)), F(np.abs(lo)) + F(np.abs(hi))))
    expected = float(np.sum(na * nb)) * shape
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = np.where(expected > 0, hist / expected, np.nan)
    return HbtResult(TcspcHistogram(edges, hist), norm, expected, int(wins.size), keep)


@dataclass
class GatedRates:
    rate: list            # MeasuredValue per bin, counts/s
    decay_rate: list      # MeasuredValue per bin, 1/s
    n_events: np.ndarray
    n_windows: np.ndarray
    fits: list = field(repr=False)
    histograms: list = field(repr=False)


def intensity_gated_rates(stream, rate_bins, sync_channel=0, photon_channel=1, gate=10e-3,
                          hist_range=(0.0, 30e-9), bin_width=16e-12, min_events=1000):
    """Lifetimes of photons grouped by the count rate of their acquisition window.

    Each photon's delay is measured from the latest preceding sync.  Its
    window rate is the number of photons in its ``gate``-long window divided
    by ``gate``; photons are grouped by ``rate_bins`` (edges in counts/s, or
    an integer number of bins holding equal numbers of photons) and each
    group's delay histogram is fitted with an EMG.

    Returns
    -------
    GatedRates
        Mean window rate (with standard error) and fitted decay rate
        1/lifetime per bin, ready for :func:`fit_gated_rates`.
    """
    if gate <= 0:
        raise ValueError("gate must be positive")
    ids = stream.channel_ids
    if sync_channel not in ids:
        raise ValueError(f"sync channel {sync_channel} not present")
    if photon_channel not in ids:
        raise ValueError(f"photon channel {photon_channel} not present")
    sync = stream.channel(sync_channel)
    ph = stream.channel(photon_channel)
    k = np.searchsorted(sync, ph, "right") - 1
    ok = k >= 0
    ph, delay = ph[ok], (ph[ok] - sync[k[ok]]) * PS

    G = int(round(gate / PS))
    w = ph // G
    wins, inv, cnt = np.unique(w, return_inverse=True, return_counts=True)
    win_rate = cnt / gate
    photon_rate = win_rate[inv]
    if np.ndim(rate_bins) == 0:
        nb = int(rate_bins)
        if nb < 2:
            raise ValueError("need at least two rate bins")
        edges = np.quantile(photon_rate, np.linspace(0, 1, nb + 1))
        edges[-1] = np.nextafter(edges[-1], np.inf)
    else:
        edges = np.asarray(rate_bins, dtype=float)
    if edges.size < 3 or np.any(np.diff(edges) <= 0):
        raise ValueError("rate bin edges must be increasing with at least two bins")
    b = np.digitize(photon_rate, edges) - 1
    wb = np.digitize(win_rate, edges) - 1

    h_edges = np.arange(hist_range[0], hist_range[1] + 0.5 * bin_width, bin_width)
    rates, gammas, nev, nwin, fits, hists = [], [], [], [], [], []
    for i in range(edges.size - 1):
        d = delay[b == i]
        if d.size < min_events:
            raise FitError(f"rate bin {i} [{edges[i]:g}, {edges[i + 1]:g}) holds {d.size} events, "
                           f"fewer than {min_events}")
        counts, _ = np.histogram(d, h_edges)
        hist = TcspcHistogram(h_edges, counts)
        res = fit_emg(hist)
        tau = res["lifetime"]
        r = win_rate[wb == i]
        rates.append(MeasuredValue(float(r.mean()), float(r.std(ddof=1) / np.sqrt(r.size)) if r.size > 1 else 0.0))
        gammas.append(MeasuredValue(1 / tau.value, tau.sigma / tau.value**2))
        nev.append(d.size)
        nwin.append(r.size)
        fits.append(res)
        hists.append(hist)
    return GatedRates(rates, gammas, np.array(nev), np.array(nwin), fits, hists)


def fit_gated_rates(gated):
    """Orthogonal-distance line through (mean rate, decay rate).

    The intercept is the decay rate with no cavity emission, i.e. the bulk
    rate; returns the ODR result and the corresponding lifetime.
    """
    x = [r.value for r in gated.rate]
    sx = [r.sigma for r in gated.rate]
    y = [g.value for g in gated.decay_rate]
    sy = [g.sigma for g in gated.decay_rate]
    res = odr_linear(x, y, sx=sx, sy=sy)
    b = res["intercept"]
    if b.value <= 0:
        raise FitError("non-positive intercept: no off-resonant decay rate")
    return res, MeasuredValue(1 / b.value, b.sigma / b.value**2)
