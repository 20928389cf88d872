"""Synthetic data with known truth for every analysis in the package.

All generators take a ``numpy.random.Generator`` (or a seed) and are
reproducible: the same seed gives identical arrays.
"""

import numpy as np
from scipy.special import voigt_profile

from .cqed import CqedParams, cavity_decay_rate
from .correlation import TimeTagStream
from .decay import TcspcHistogram, vibration_averaged_decay
from .fitting import saturation_curve
from .sidebands import Sweep, triplet_model
from .units import from_ghz
from .vibration import DetuningSeries

__all__ = [
    "rng_from",
    "decay_histogram",
    "emg_histogram",
    "sideband_sweep",
    "resonance_sweeps",
    "voigt_detunings",
    "vibration_series",
    "saturation_data",
    "spectrum",
    "poisson_stream",
    "antibunched_stream",
    "swept_cavity_stream",
]

PS = 1e-12


def rng_from(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def _bin_average(f, edges):
    lo, hi = edges[:-1], edges[1:]
    return (f(lo) + 4 * f(0.5 * (lo + hi)) + f(hi)) / 6


def decay_histogram(params, sigma_nu, sigma_t, events=1_000_000, edges=None, t0=0.0,
                    background=0.0, rng=0):
    """Delay histogram drawn from the vibration-averaged decay model.

    ``background`` is the expected flat count per bin.  Bin contents are
    Poisson with means from the area-normalized curve integrated over each
    bin (three-point Simpson).
    """
    rng = rng_from(rng)
    if edges is None:
        edges = np.arange(-2e-9, 12e-9 + 1e-15, 16e-12)
    edges = np.asarray(edges, dtype=float)

    def f(t):
        return vibration_averaged_decay(params, sigma_nu, sigma_t, t - t0, normalize="area")

    mu = events * _bin_average(f, edges) * np.diff(edges) + background
    return TcspcHistogram(edges, rng.poisson(mu)), mu


def emg_histogram(lifetime, sigma_t, events=1_000_000, edges=None, t0=0.0, background=0.0, rng=0):
    """Delay histogram from an exponentially modified Gaussian."""
    from .decay import emg
    rng = rng_from(rng)
    if edges is None:
        edges = np.arange(-2e-9, 12e-9 + 1e-15, 16e-12)
    edges = np.asarray(edges, dtype=float)
    mu = _bin_average(lambda t: emg(t, lifetime, sigma_t, t0, events), edges) * np.diff(edges)
    return TcspcHistogram(edges, rng.poisson(mu + background)), mu + background


def sideband_sweep(kappa_ghz=2.07, spacing_ghz=4.0, slope=17.64, center=0.0, span=None,
                   n_points=2001, a_carrier=1.0, a_side=0.45, baseline=0.02, noise=0.01, rng=0):
    """Transmission scan (x in pm) through a carrier and two sidebands.

    Returns x, y and the truth dict (positions and widths in pm).
    """
    rng = rng_from(rng)
    sp = spacing_ghz * slope
    fw = kappa_ghz * slope
    span = span if span is not None else 2 * sp + 6 * fw
    x = np.linspace(center - span, center + span, n_points)
    y = triplet_model(x, center, sp, fw, a_carrier, a_side, baseline)
    y = y + noise * rng.standard_normal(x.size)
    truth = {"center": center, "spacing": sp, "fwhm": fw, "kappa_ghz": kappa_ghz}
    return x, y, truth


def resonance_sweeps(detunings_ghz, times=None, spacing_ghz=4.0, slope=17.64, kappa_ghz=2.07,
                     hysteresis=0.0, noise=0.01, n_points=801, rng=0):
    """One sideband sweep per detuning, alternating up and down.

    The carrier of sweep i sits at ``detunings_ghz[i] * slope`` pm plus
    ``direction * hysteresis / 2`` pm.
    """
    rng = rng_from(rng)
    d = np.asarray(detunings_ghz, dtype=float)
    times = np.arange(d.size, dtype=float) if times is None else np.asarray(times, dtype=float)
    sp, fw = spacing_ghz * slope, kappa_ghz * slope
    span = 2 * sp + 4 * fw
    out = []
    for i, (di, ti) in enumerate(zip(d, times)):
        direction = 1 if i % 2 == 0 else -1
        c = di * slope + direction * hysteresis / 2
        x = np.linspace(-span, span, n_points)
        y = triplet_model(x, c, sp, fw, 1.0, 0.45, 0.02) + noise * rng.standard_normal(x.size)
        if direction < 0:
            x, y = x[::-1], y[::-1]
        out.append(Sweep(x, y, direction, ti))
    return out


def voigt_detunings(n=100_000, sigma=31.7, fwhm_l=43.7, quiet_fraction=0.5, rate=20_000.0,
                    cycle=1.0, rng=0):
    """Detuning samples whose full set is Voigt and whose quiet subset is Gaussian.

    Samples are taken at ``rate`` (Hz); the first ``quiet_fraction`` of each
    ``cycle`` (s) is quiet, Gaussian with standard deviation ``sigma``.  The
    rest is drawn from (V - q G) / (1 - q) by rejection, so the pooled
    samples follow the Voigt exactly when the quiet fraction of samples is
    q.  Requires q <= min V/G.
    """
    rng = rng_from(rng)
    gam = fwhm_l / 2
    t = np.arange(n) / rate
    quiet = (t % cycle) < quiet_fraction * cycle
    q = quiet.mean()
    x = np.linspace(0, 10 * sigma, 4001)  # V/G grows in the tails, so its minimum is central
    G = np.exp(-0.5 * (x / sigma) ** 2) / (np.sqrt(2 * np.pi) * sigma)
    if fwhm_l > 0 and q > np.min(voigt_profile(x, sigma, gam) / G):
        raise ValueError("quiet fraction too large for a Voigt marginal")
    vals = np.empty(n)
    vals[quiet] = sigma * rng.standard_normal(int(quiet.sum()))
    need = int((~quiet).sum())
    loud = []
    while need > 0:
        m = int(need * 1.6) + 100
        v = sigma * rng.standard_normal(m) + gam * rng.standard_cauchy(m)
        g = np.exp(-0.5 * (v / sigma) ** 2) / (np.sqrt(2 * np.pi) * sigma)
        acc = rng.random(m) < 1 - q * g / voigt_profile(v, sigma, gam)
        take = v[acc][:need]
        loud.append(take)
        need -= take.size
    vals[~quiet] = np.concatenate(loud) if loud else np.zeros(0)
    return DetuningSeries(t, vals, quiet, unit="pm")


def _colored(n, fs, rng, f_lo=30.0, f_hi=3000.0):
    # band-limited noise with a gentle 1/f roll-off, unit variance
    spec = rng.standard_normal(n // 2 + 1) + 1j * rng.standard_normal(n // 2 + 1)
    f = np.fft.rfftfreq(n, 1 / fs)
    shape = np.where((f >= f_lo) & (f <= f_hi), 1 / np.sqrt(np.maximum(f, f_lo)), 0.0)
    x = np.fft.irfft(spec * shape, n)
    return x / x.std()


def vibration_series(duration=20.0, fs=20_000.0, rms_full=51.0, rms_quiet=28.9, quiet_fraction=0.4,
                     cycle=1.0, rng=0):
    """Time series (pm) whose quiet and full-cycle RMS take given values.

    Each cryocooler ``cycle`` starts with a quiet stretch of length
    ``quiet_fraction * cycle``; the remainder is scaled so the overall
    mean square equals ``rms_full**2``.
    """
    rng = rng_from(rng)
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    quiet = (t % cycle) < quiet_fraction * cycle
    q = quiet.mean()
    loud2 = (rms_full**2 - q * rms_quiet**2) / (1 - q)
    if loud2 < rms_quiet**2:
        raise ValueError("full-cycle RMS must exceed the quiet RMS")
    a = _colored(n, fs, rng)
    scale = np.where(quiet, rms_quiet, np.sqrt(loud2))
    return DetuningSeries(t, a * scale, quiet, unit="pm")


def saturation_data(powers, i_inf, p_sat, c_bg=0.0, c_dark=0.0, scatter=0.05, outliers=0,
                    outlier_factor=0.4, rng=0):
    """Count rates following the saturation curve with multiplicative scatter.

    ``outliers`` randomly chosen points are multiplied by ``outlier_factor``
    (low outliers, as from a cavity scan out of sync with the quiet period).
    """
    rng = rng_from(rng)
    P = np.asarray(powers, dtype=float)
    I = saturation_curve(P, i_inf, p_sat, c_bg, c_dark)
    I = I * (1 + scatter * rng.standard_normal(P.size))
    bad = np.zeros(P.size, bool)
    if outliers:
        bad[rng.choice(P.size, outliers, replace=False)] = True
        I[bad] *= outlier_factor
    return P, I, bad


def spectrum(center=0.0, sigma_g=1.796, fwhm_l=2.3, events=200_000, bin_width=0.1, span=None,
             rng=0):
    """Histogram of emission frequencies (GHz) from a Voigt line."""
    rng = rng_from(rng)
    v = center + sigma_g * rng.standard_normal(events) + fwhm_l / 2 * rng.standard_cauchy(events)
    span = span if span is not None else 8 * (sigma_g + fwhm_l)
    edges = np.arange(center - span, center + span + 0.5 * bin_width, bin_width)
    counts, _ = np.histogram(v, edges)
    return edges, counts


def poisson_stream(rates=(2e4, 2e4), duration=1.0, gaps=(), rng=0):
    """Independent Poisson channels; ``gaps`` are (start, stop) s intervals with no counts."""
    rng = rng_from(rng)
    per = {}
    for c, r in enumerate(rates):
        n = rng.poisson(r * duration)
        t = np.sort(rng.random(n) * duration)
        for a, b in gaps:
            t = t[(t < a) | (t >= b)]
        per[c] = np.rint(t / PS).astype(np.int64)
    return TimeTagStream.from_channels(per)


def antibunched_stream(duration=0.1, excitation_rate=2e8, lifetime=1.31e-9, efficiency=0.1,
                       jitter=0.14e-9, dark_rate=0.0, shelving_prob=0.0, shelving_time=50e-9,
                       chunk=1_000_000, rng=0):
    """Photon stream from a continuously pumped single emitter split onto two detectors.

    Each cycle waits an exponential excitation time then an exponential
    emission time; after an emission the emitter may enter a dark state
    for an exponential ``shelving_time`` with probability ``shelving_prob``.
    Photons are detected with ``efficiency``, routed 50/50 and blurred by
    Gaussian ``jitter`` per detector.
    """
    rng = rng_from(rng)
    per = {0: [], 1: []}
    t_now = 0.0
    while t_now < duration:
        wait = rng.exponential(1 / excitation_rate, chunk) + rng.exponential(lifetime, chunk)
        if shelving_prob > 0:
            shelf = rng.random(chunk) < shelving_prob
            wait[1:][shelf[:-1]] += rng.exponential(shelving_time, int(shelf[:-1].sum()))
        t = t_now + np.cumsum(wait)
        t_now = t[-1]
        t = t[t < duration]
        det = t[rng.random(t.size) < efficiency]
        ch = rng.random(det.size) < 0.5
        for c, sel in ((0, ~ch), (1, ch)):
            per[c].append(det[sel] + jitter * rng.standard_normal(int(sel.sum())))
    for c in per:
        t = np.concatenate(per[c])
        if dark_rate > 0:
            t = np.concatenate([t, rng.random(rng.poisson(dark_rate * duration)) * duration])
        t = np.sort(t[(t >= 0) & (t < duration)])
        per[c] = np.rint(t / PS).astype(np.int64)
    return TimeTagStream.from_channels(per)


def swept_cavity_stream(params=None, sweep_amplitude=None, sweep_frequency=1.0, duration=20.0,
                        rep_rate=10e6, peak_efficiency=0.02, sigma_t=0.1e-9, t0=2e-9,
                        dark_rate=0.0, step=1e-3, rng=0):
    """Pulsed-excitation time tags while the cavity detuning is swept sinusoidally.

    At detuning delta the decay rate is gamma + gamma_cav(delta) and the
    per-pulse detection probability is ``peak_efficiency`` times
    gamma_cav(delta) / gamma_cav(0), the Lorentzian cavity emission rate.
    Channel 0 carries the sync of every pulse that produced a detection,
    channel 1 the photons.
    """
    from .cqed import gev1_params
    rng = rng_from(rng)
    p = params if params is not None else gev1_params()
    amp = sweep_amplitude if sweep_amplitude is not None else from_ghz(15.0)
    g0 = cavity_decay_rate(p, 0.0)
    n_steps = int(round(duration / step))
    per_step = int(round(rep_rate * step))
    syncs, photons = [], []
    for k in range(n_steps):
        tc = (k + 0.5) * step
        delta = amp * np.sin(2 * np.pi * sweep_frequency * tc)
        gc = cavity_decay_rate(p, delta)
        prob = peak_efficiency * gc / g0
        n = rng.binomial(per_step, prob)
        if n == 0:
            continue
        pulses = np.sort(rng.choice(per_step, n, replace=False)) + k * per_step
        ts = pulses / rep_rate
        arrival = ts + t0 + rng.exponential(1 / (p.gamma + gc), n) + sigma_t * rng.standard_normal(n)
        syncs.append(ts)
        photons.append(arrival)
    ts = np.concatenate(syncs) if syncs else np.zeros(0)
    ph = np.concatenate(photons) if photons else np.zeros(0)
    if dark_rate > 0:
        ph = np.concatenate([ph, rng.random(rng.poisson(dark_rate * duration)) * duration])
    per = {0: np.rint(ts / PS).astype(np.int64), 1: np.rint(np.sort(ph) / PS).astype(np.int64)}
    return TimeTagStream.from_channels(per)
