"""Photon-arrival delay histograms after pulsed excitation.

The detection probability of a cavity photon at delay t is the cavity
population rho_cc(t, delta) averaged over a Gaussian distribution of
vibration-induced detunings and smeared by a Gaussian instrument
response.  rho_cc is a difference of two exponentials, so the response
convolution is done in closed form and only the detuning average needs
quadrature (Gauss-Hermite, with a trapezoidal reference).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, erfcx, roots_hermite

from .cqed import CqedParams, dephasing_from_linewidth, transfer_rate
from .fitting import (FitError, MeasuredValue, MonteCarloResult, least_squares, member_rng,
                      monte_carlo_propagate)

__all__ = [
    "TcspcHistogram",
    "exp_gauss",
    "emg",
    "vibration_averaged_decay",
    "vibration_averaged_emission",
    "fit_emg",
    "fit_exponential",
    "apparent_lifetime",
    "max_coupling_for_constraint",
    "ConstrainedLifetimeFit",
    "fit_constrained_lifetime",
]


@dataclass
class TcspcHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    total_events: int = None

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.counts = np.asarray(self.counts)
        if self.counts.size != self.bin_edges.size - 1:
            raise ValueError("counts must have one entry fewer than bin_edges")
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError("bin_edges must be strictly increasing")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if self.total_events is None:
            self.total_events = int(np.sum(self.counts))
        if np.sum(self.counts) > self.total_events:
            raise ValueError("counts exceed total_events")

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self):
        return np.diff(self.bin_edges)

    def __eq__(self, other):
        return (isinstance(other, TcspcHistogram)
                and np.array_equal(self.bin_edges, other.bin_edges)
                and np.array_equal(self.counts, other.counts)
                and self.total_events == other.total_events)


def exp_gauss(t, rate, sigma):
    """Step-started exponential exp(-rate t) H(t) convolved with a unit-area Gaussian.

    Broadcasts over ``t`` and ``rate``; ``sigma = 0`` gives the bare
    exponential.
    """
    t = np.asarray(t, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if sigma == 0:
        return np.where(t >= 0, np.exp(-rate * np.maximum(t, 0.0)), 0.0)
    u = (rate * sigma**2 - t) / (np.sqrt(2) * sigma)
    with np.errstate(over="ignore", under="ignore"):
        pos = 0.5 * np.exp(-0.5 * (t / sigma) ** 2) * erfcx(np.maximum(u, 0.0))
        neg = 0.5 * np.exp(0.5 * (rate * sigma) ** 2 - rate * t) * erfc(np.minimum(u, 0.0))
    return np.where(u >= 0, pos, neg)


def emg(t, lifetime, sigma_t, t0, amplitude, baseline=0.0):
    """Exponentially modified Gaussian with area ``amplitude`` plus a flat baseline."""
    k = 1.0 / lifetime
    return amplitude * k * exp_gauss(np.asarray(t) - t0, k, sigma_t) + baseline


def _cc_rates(params, detuning):
    """Amplitude and the two decay rates of rho_cc = A (e^-slow t - e^-fast t)."""
    R = transfer_rate(params, detuning)
    gam, kap = params.gamma, params.kappa
    alpha = np.sqrt(4 * R**2 + (gam - kap) ** 2)
    slow = (2 * R + gam + kap - alpha) / 2
    fast = (2 * R + gam + kap + alpha) / 2
    return R, alpha, slow, fast


def _detuning_nodes(sigma_nu, n_nodes, method):
    if sigma_nu == 0:
        return np.zeros(1), np.ones(1)
    if method == "hermite":
        x, w = roots_hermite(n_nodes)
        return np.sqrt(2) * sigma_nu * x, w / np.sqrt(np.pi)
    if method == "trapezoid":
        d = np.linspace(-8 * sigma_nu, 8 * sigma_nu, n_nodes)
        w = np.exp(-0.5 * (d / sigma_nu) ** 2)
        w[[0, -1]] *= 0.5
        return d, w / (np.sqrt(2 * np.pi) * sigma_nu) * (d[1] - d[0])
    raise ValueError(f"unknown quadrature {method!r}")


def _cc_convolved(t, R, alpha, slow, fast, sigma_t):
    # (R/alpha)(e^-slow t - e^-fast t) = R e^-slow t (1 - e^-alpha t)/alpha ; alpha -> 0 safe
    t = np.asarray(t)[:, None]
    small = alpha * max(np.max(np.abs(t)), 1e-30) < 1e-6
    if sigma_t == 0:
        tt = np.maximum(t, 0.0)
        at = alpha * tt
        h = np.where(small, tt * (1 - at / 2), -np.expm1(-at) / np.where(small, 1.0, alpha))
        return np.where(t >= 0, R * np.exp(-slow * tt) * h, 0.0)
    diff = exp_gauss(t, slow, sigma_t) - exp_gauss(t, fast, sigma_t)
    if np.any(small):
        # degenerate rates: derivative of exp_gauss with respect to the rate
        eps = 1e-6 * np.maximum(slow, 1.0)
        deriv = (exp_gauss(t, slow - eps, sigma_t) - exp_gauss(t, slow + eps, sigma_t)) / (2 * eps)
        return np.where(small, R * deriv, R / np.where(small, 1.0, alpha) * diff)
    return R / alpha * diff


def vibration_averaged_decay(params, sigma_nu, sigma_t, t_grid, n_nodes=64, method="hermite",
                             normalize="peak"):
    """Detection probability versus delay, averaged over cavity vibrations.

    Parameters
    ----------
    params : CqedParams
        Undriven rates; ``params.detuning`` is the mean detuning.
    sigma_nu : float
        Standard deviation of the detuning distribution (rad/s).
    sigma_t : float
        Instrument response standard deviation (s).
    t_grid : array_like
        Delays (s); may start before zero.
    n_nodes : int
        Quadrature nodes over detuning.
    method : {'hermite', 'trapezoid'}
        Gauss-Hermite, or the trapezoidal rule over +/- 8 sigma_nu.
    normalize : {'peak', 'area', None}
        Unit maximum on ``t_grid``, unit integral over all delays, or the
        raw kappa-free cavity population.
    """
    if sigma_nu < 0 or sigma_t < 0:
        raise ValueError("sigma_nu and sigma_t must be >= 0")
    t = np.asarray(t_grid, dtype=float)
    d, w = _detuning_nodes(sigma_nu, n_nodes, method)
    R, alpha, slow, fast = _cc_rates(params, params.detuning + d)
    curve = _cc_convolved(t, R, alpha, slow, fast, sigma_t) @ w
    if not np.all(np.isfinite(curve)):
        raise FloatingPointError("detuning quadrature produced non-finite values")
    if normalize == "peak":
        peak = curve.max()
        if peak <= 0:
            raise FitError("decay curve vanishes on the requested grid")
        return curve / peak
    if normalize == "area":
        area = np.sum(w * R / (slow * fast))
        if area <= 0:
            raise FitError("decay curve has zero area")
        return curve / area
    if normalize is None:
        return curve
    raise ValueError(f"unknown normalisation {normalize!r}")


def vibration_averaged_emission(params, sigma_nu, sigma_t, t_grid, n_nodes=64):
    """Total photon emission rate gamma rho_aa + kappa rho_cc, vibration averaged.

    rho_aa = ((1 - c) e^-slow t + (1 + c) e^-fast t) / 2 with
    c = (gamma - kappa) / alpha, so the response convolution stays in closed
    form.  Every excitation leaves as a photon, hence unit area; with g = 0
    the curve is the bare gamma e^-gamma t.
    """
    if sigma_nu < 0 or sigma_t < 0:
        raise ValueError("sigma_nu and sigma_t must be >= 0")
    t = np.asarray(t_grid, dtype=float)
    d, w = _detuning_nodes(sigma_nu, n_nodes, "hermite")
    R, alpha, slow, fast = _cc_rates(params, params.detuning + d)
    c = np.where(alpha > 0, (params.gamma - params.kappa) / np.where(alpha > 0, alpha, 1.0), 0.0)
    if sigma_t == 0:
        tt = np.maximum(t, 0.0)[:, None]
        es, ef = np.exp(-slow * tt), np.exp(-fast * tt)
        on = (t >= 0)[:, None]
        es, ef = np.where(on, es, 0.0), np.where(on, ef, 0.0)
    else:
        es, ef = exp_gauss(t[:, None], slow, sigma_t), exp_gauss(t[:, None], fast, sigma_t)
    aa = 0.5 * ((1 - c) * es + (1 + c) * ef)
    cc = _cc_convolved(t, R, alpha, slow, fast, sigma_t)
    return (params.gamma * aa + params.kappa * cc) @ w


def _check_peak(hist, guard=0.05):
    c = np.asarray(hist.counts, dtype=float)
    i = int(np.argmax(c))
    n = c.size
    if i < guard * n or i > (1 - guard) * n:
        raise FitError("histogram peak lies at the boundary of the delay range")
    return i


def _emg_guess(hist):
    c = np.asarray(hist.counts, dtype=float)
    t = hist.centers
    i = _check_peak(hist)
    base = float(np.median(c[: max(3, i // 4)])) if i > 8 else 0.0
    above = c - base
    tail = t > t[i]
    # 1/e point after the peak as the lifetime seed
    after = np.flatnonzero(tail & (above < above[i] / np.e))
    tau = float(t[after[0]] - t[i]) if after.size else float(np.ptp(t) / 5)
    half = t[above >= above[i] / 2]
    sigma = max(float(t[i] - half.min()) / 2.355, 2 * hist.widths.min())
    events = float(np.sum(np.maximum(above, 0.0)))
    return {"lifetime": max(tau, 2 * hist.widths.min()), "sigma_t": sigma, "t0": float(t[i]) - sigma,
            "amplitude": max(events, 1.0), "baseline": max(base, 0.0) / float(np.mean(hist.widths))}


def _emg_scale(p0, hist):
    w = float(np.mean(hist.widths))
    return [p0["lifetime"], max(p0["sigma_t"], w), max(abs(p0["t0"]), p0["sigma_t"], w),
            p0["amplitude"], max(p0["baseline"], 1.0 / w)]


def fit_emg(hist, p0=None, poisson=True):
    """Exponentially modified Gaussian fit to a delay histogram.

    Model counts per bin are ``emg(t) * bin_width`` at the bin centres.
    Parameters: ``lifetime``, ``sigma_t``, ``t0``, ``amplitude`` (events in
    the peak) and ``baseline`` (counts per second of delay).
    ``poisson=False`` switches to least squares with variance max(n, 1).
    """
    p0 = p0 or _emg_guess(hist)
    t, w = hist.centers, hist.widths
    counts = np.asarray(hist.counts, dtype=float)

    def model(x, lifetime, sigma_t, t0, amplitude, baseline):
        return emg(x, lifetime, sigma_t, t0, amplitude, baseline) * w

    lo = [1e-15, 0.0, -np.inf, 0.0, 0.0]
    sigma = None if poisson else np.sqrt(np.maximum(counts, 1.0))
    return least_squares(model, t, counts, p0, sigma=sigma, poisson=poisson,
                         bounds=(lo, [np.inf] * 5), scale=_emg_scale(p0, hist))


def fit_exponential(hist, t_start=None, poisson=True):
    """Pure exponential plus baseline fitted from ``t_start`` onward."""
    t, w = hist.centers, hist.widths
    counts = np.asarray(hist.counts, dtype=float)
    i = _check_peak(hist) if t_start is None else int(np.searchsorted(t, t_start))
    sel = slice(i, None)
    tt, cc, ww = t[sel], counts[sel], w[sel]
    tail = cc - cc.min()
    k0 = 1.0 / max(np.sum(tail * (tt - tt[0])) / max(tail.sum(), 1.0), ww.min())

    def model(x, lifetime, amplitude, baseline):
        return (amplitude * np.exp(-(x - tt[0]) / lifetime) + baseline) * ww

    p0 = {"lifetime": 1 / k0, "amplitude": float(cc[0] / ww[0]), "baseline": float(cc.min() / ww[0])}
    sigma = None if poisson else np.sqrt(np.maximum(cc, 1.0))
    scale = [p0["lifetime"], max(p0["amplitude"], 1.0), max(p0["baseline"], 1.0 / float(np.mean(ww)))]
    return least_squares(model, tt, cc, p0, sigma=sigma, poisson=poisson,
                         bounds=([1e-15, 0, 0], [np.inf] * 3), scale=scale)


def apparent_lifetime(params, sigma_nu, sigma_t, t_grid=None, events=1e6):
    """Lifetime an EMG fit reports for the vibration-averaged decay curve.

    The curve is scaled to ``events`` counts on ``t_grid`` (default -2 ns to
    12 ns in 16 ps bins) and fitted without noise, weighting each bin by
    1 / max(n, 1).
    """
    if t_grid is None:
        t_grid = np.arange(-2e-9, 12e-9 + 1e-15, 16e-12)
    edges = np.asarray(t_grid, dtype=float)
    centers = 0.5 * (edges[1:] + edges[:-1])
    curve = vibration_averaged_decay(params, sigma_nu, sigma_t, centers, normalize="area")
    counts = curve * np.diff(edges) * events
    res = fit_emg(TcspcHistogram(edges, counts, int(np.ceil(counts.sum())) + 1), poisson=False)
    return res.params["lifetime"], res


def max_coupling_for_constraint(delta_cw, kappa_prime, gamma, pump):
    """Largest g for which the linewidth constraint still allows gamma* >= 0."""
    g0 = gamma + kappa_prime + pump
    if delta_cw < g0:
        raise FitError("linewidth constraint demands gamma* < 0 for every g")
    B = (delta_cw**2 - g0**2) / g0
    return float(np.sqrt(B * kappa_prime * (gamma + pump) / (4 * (gamma + pump + kappa_prime))))


@dataclass
class ConstrainedLifetimeFit:
    ensemble: object
    g: MeasuredValue
    gamma_star: MeasuredValue
    sigma_t: MeasuredValue
    t: np.ndarray
    band: tuple
    c_inc: MeasuredValue = None   # 4 g^2 / (kappa gamma)
    c: MeasuredValue = None       # 4 g^2 / (kappa (gamma + gamma*))
    members: list = field(default_factory=list, repr=False)


def _constrained_single(hist, inputs, n_nodes, p0=None):
    kap, gam, pump, snu = inputs["kappa"], inputs["gamma"], inputs["pump"], inputs["sigma_nu"]
    dcw, kp = inputs["delta_cw"], inputs["kappa_prime"]
    if min(kap, gam, kp, dcw) <= 0 or pump < 0 or snu < 0:
        raise ValueError("sampled a non-physical input")
    g_max = max_coupling_for_constraint(dcw, kp, gam, pump)
    t, w = hist.centers, hist.widths
    counts = np.asarray(hist.counts, dtype=float)

    def gamma_star(g):
        gs = dephasing_from_linewidth(g, dcw, kp, gam, pump)
        return max(0.0 if np.isnan(gs) else gs, 0.0)

    def model(x, g, sigma_t, t0, amplitude, baseline):
        p = CqedParams(g=g, kappa=kap, gamma=gam, gamma_star=gamma_star(g))
        curve = vibration_averaged_decay(p, snu, sigma_t, x - t0, n_nodes=n_nodes, normalize="area")
        return (amplitude * curve + baseline) * w

    if p0 is None:
        e = _emg_guess(hist)
        p0 = {"g": 0.5 * g_max, "sigma_t": e["sigma_t"], "t0": e["t0"],
              "amplitude": e["amplitude"], "baseline": e["baseline"]}
        p0["g"] = min(p0["g"], 0.99 * g_max)
    bounds = ([1e-3 * g_max, 0.0, -np.inf, 0.0, 0.0], [g_max, np.inf, np.inf, np.inf, np.inf])
    mw = float(np.mean(w))
    scale = [g_max, max(p0["sigma_t"], mw), max(abs(p0["t0"]), p0["sigma_t"], mw),
             max(p0["amplitude"], 1.0), max(p0["baseline"], 1.0 / mw)]
    res = least_squares(model, t, counts, p0, poisson=True, bounds=bounds, scale=scale)
    res.info["gamma_star"] = gamma_star(res.params["g"])
    res.info["inputs"] = dict(inputs)
    return res


def fit_constrained_lifetime(hist, fixed, linewidth_constraint, n_mc=50, seed=0, n_nodes=64,
                             band_percentiles=(15.865, 84.135)):
    """Fit the vibration-averaged decay with g and gamma* tied by the driven linewidth.

    Free parameters are g, the response width sigma_t, the time offset, the
    amplitude and a flat background; gamma* follows from g through the
    measured CW linewidth ``Delta_cw`` taken at cavity linewidth
    ``kappa'``.  The fit is repeated ``n_mc`` times with the fixed inputs
    drawn from their Gaussian errors.

    Parameters
    ----------
    hist : TcspcHistogram
    fixed : dict
        ``kappa``, ``gamma``, ``pump``, ``sigma_nu`` as MeasuredValue (or
        plain floats), all rad/s.
    linewidth_constraint : dict
        ``delta_cw`` and ``kappa_prime`` (rad/s), MeasuredValue or floats.
    n_mc : int
    seed : int

    Returns
    -------
    ConstrainedLifetimeFit
        Ensemble mean +/- standard deviation of g, gamma*, sigma_t and the
        two cooperativities (each member with its own sampled kappa and
        gamma), and the one-sigma band of the fitted curves on the
        histogram centres.
    """
    inputs = {}
    for k in ("kappa", "gamma", "pump", "sigma_nu"):
        inputs[k] = fixed[k]
    for k in ("delta_cw", "kappa_prime"):
        inputs[k] = linewidth_constraint[k]
    inputs = {k: v if isinstance(v, MeasuredValue) else MeasuredValue(float(v), 0.0)
              for k, v in inputs.items()}
    central = {k: v.value for k, v in inputs.items()}
    start = _constrained_single(hist, central, n_nodes)
    p0 = dict(start.params)

    def member(sampled, _rng):
        q = dict(p0)
        g_max = max_coupling_for_constraint(sampled["delta_cw"], sampled["kappa_prime"],
                                            sampled["gamma"], sampled["pump"])
        q["g"] = min(q["g"], 0.99 * g_max)
        return _constrained_single(hist, sampled, n_nodes, p0=q)

    if all(v.sigma == 0 for v in inputs.values()):
        members = [start] * n_mc
        ens = MonteCarloResult(members=members, failures=[])
    else:
        ens = monte_carlo_propagate(member, inputs, n_mc, seed=seed)
    g = ens.samples("g")
    gs = np.array([m.info["gamma_star"] for m in ens.members])
    st = ens.samples("sigma_t")
    kap = np.array([m.info["inputs"]["kappa"] for m in ens.members])
    gam = np.array([m.info["inputs"]["gamma"] for m in ens.members])
    c_inc = 4 * g**2 / (kap * gam)
    c = 4 * g**2 / (kap * (gam + gs))
    t = hist.centers
    curves = np.array([m.predict(t) for m in ens.members])
    band = tuple(np.percentile(curves, band_percentiles, axis=0))

    def mv(a):
        return MeasuredValue(float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0)

    return ConstrainedLifetimeFit(ensemble=ens, g=mv(g), gamma_star=mv(gs), sigma_t=mv(st),
                                  t=t, band=band, c_inc=mv(c_inc), c=mv(c), members=ens.members)
