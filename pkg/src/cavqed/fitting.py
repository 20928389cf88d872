"""Estimation machinery shared by every fit in the package.

Weighted nonlinear least squares with central-difference Jacobians,
straight-line orthogonal distance regression, Monte-Carlo propagation of
uncertain fixed inputs, single-pass sigma clipping and the emitter
saturation curve.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import odr as _odr
from scipy import optimize

__all__ = [
    "FitError",
    "ConvergenceError",
    "MonteCarloError",
    "MeasuredValue",
    "FitResult",
    "MonteCarloResult",
    "poisson_sigma",
    "numeric_jacobian",
    "least_squares",
    "odr_linear",
    "monte_carlo_propagate",
    "member_rng",
    "sigma_clip",
    "saturation_curve",
    "fit_saturation",
]


class FitError(RuntimeError):
    """A fit could not produce a usable estimate."""


class ConvergenceError(FitError):
    pass


class MonteCarloError(FitError):
    pass


@dataclass(frozen=True)
class MeasuredValue:
    value: float
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    def __iter__(self):
        yield self.value
        yield self.sigma

    def __repr__(self):
        return f"{self.value:.6g} +/- {self.sigma:.2g}"


@dataclass
class FitResult:
    params: dict
    covariance: np.ndarray
    chi2_reduced: float
    n_points: int
    n_free: int
    converged: bool = True
    model: Callable = field(default=None, repr=False)
    info: dict = field(default_factory=dict, repr=False)

    @property
    def names(self):
        return list(self.params)

    @property
    def values(self):
        return np.array(list(self.params.values()), dtype=float)

    @property
    def errors(self):
        return dict(zip(self.params, np.sqrt(np.clip(np.diag(self.covariance), 0, None))))

    def __getitem__(self, name):
        return MeasuredValue(self.params[name], self.errors[name])

    def predict(self, x):
        if self.model is None:
            raise ValueError("fit result carries no model")
        return self.model(x, *self.values)


@dataclass
class MonteCarloResult:
    members: list
    failures: list

    def samples(self, name):
        return np.array([m.params[name] for m in self.members])

    def summary(self, percentiles=(15.865, 84.135)):
        """Per-parameter mean, std and percentile band over the ensemble."""
        out = {}
        for name in self.members[0].params:
            s = self.samples(name)
            lo, hi = np.percentile(s, percentiles)
            out[name] = {"mean": float(s.mean()), "std": float(s.std(ddof=1)) if s.size > 1 else 0.0,
                         "lo": float(lo), "hi": float(hi)}
        return out


def poisson_sigma(counts):
    """Per-bin standard deviation for photon-counting data, sqrt(max(n, 1))."""
    return np.sqrt(np.maximum(np.asarray(counts, dtype=float), 1.0))


def numeric_jacobian(fun, p, lower=None, upper=None, typical=None):
    """Central-difference Jacobian with step 1e-6 max(|p|, typical).

    ``typical`` is a per-parameter magnitude (default 1e-2) that keeps the
    step finite for parameters passing through zero.

    Falls back to a one-sided difference where a central step would leave
    the bounds.
    """
    p = np.asarray(p, dtype=float)
    f0 = None
    cols = []
    lower = np.full(p.size, -np.inf) if lower is None else lower
    upper = np.full(p.size, np.inf) if upper is None else upper
    typical = np.full(p.size, 1e-2) if typical is None else np.broadcast_to(typical, p.shape)
    for i in range(p.size):
        h = 1e-6 * max(abs(p[i]), typical[i])
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        if up[i] > upper[i]:
            f0 = fun(p) if f0 is None else f0
            cols.append((f0 - fun(dn)) / h)
        elif dn[i] < lower[i]:
            f0 = fun(p) if f0 is None else f0
            cols.append((fun(up) - f0) / h)
        else:
            cols.append((fun(up) - fun(dn)) / (2 * h))
    return np.column_stack(cols)


def _deviance_residuals(mu, n):
    mu = np.maximum(mu, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(n > 0, n * np.log(n / mu), 0.0)
    dev = np.maximum(2 * (mu - n + term), 0.0)
    return np.sign(mu - n) * np.sqrt(dev)


def least_squares(model, x, y, p0, sigma=None, bounds=None, names=None,
                  absolute_sigma=True, max_nfev=2000, xtol=1e-12, ftol=1e-12, gtol=1e-12,
                  poisson=False, scale=None):
    """Weighted least-squares fit of ``model(x, *p)`` to ``y``.

    Parameters
    ----------
    model : callable
    x, y : array_like
    p0 : sequence or dict
        Starting point; a dict also supplies the parameter names.
    sigma : array_like, optional
        Per-point standard deviations.  Without them all points weigh one
        and the covariance is rescaled by the reduced chi-square.
    bounds : (lower, upper), optional
    names : sequence of str, optional
    absolute_sigma : bool
        Keep the covariance as (J^T W J)^-1 without chi-square rescaling.
    poisson : bool
        Treat ``y`` as counts and minimise the Poisson deviance (maximum
        likelihood) instead of a weighted sum of squares; ``sigma`` is
        ignored and ``chi2_reduced`` reports deviance per degree of freedom.
    scale : array_like, optional
        Typical parameter magnitudes for the finite-difference steps;
        defaults to |p0| (1e-2 where p0 is zero).

    Returns
    -------
    FitResult
    """
    if isinstance(p0, dict):
        names = list(p0)
        p0 = list(p0.values())
    p0 = np.asarray(p0, dtype=float)
    names = list(names) if names is not None else [f"p{i}" for i in range(p0.size)]
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("data contain non-finite values")
    if poisson:
        if np.any(y < 0):
            raise ValueError("counts must be non-negative")
        w = None
        absolute_sigma = True
    elif sigma is None:
        w = np.ones_like(y)
        absolute_sigma = False
    else:
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
        if np.any(sigma <= 0):
            raise ValueError("sigma must be positive")
        w = 1.0 / sigma

    if bounds is None:
        lower, upper = np.full(p0.size, -np.inf), np.full(p0.size, np.inf)
    else:
        lower = np.broadcast_to(np.asarray(bounds[0], dtype=float), p0.shape).copy()
        upper = np.broadcast_to(np.asarray(bounds[1], dtype=float), p0.shape).copy()
    if np.any(p0 < lower) or np.any(p0 > upper):
        raise ValueError("initial parameters outside bounds")

    def resid(p):
        mu = np.asarray(model(x, *p), dtype=float)
        if w is None:
            return _deviance_residuals(mu, y)
        return (mu - y) * w

    if scale is None:
        scale = np.where(p0 != 0, np.abs(p0), 1e-2)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), p0.shape).copy()
    if np.any(scale <= 0) or not np.all(np.isfinite(scale)):
        raise ValueError("scale must be positive and finite")

    # optimise in units of the typical magnitudes so every parameter is O(1)
    def resid_u(u):
        return resid(u * scale)

    def jac_u(u):
        return numeric_jacobian(resid_u, u, lower / scale, upper / scale, np.ones_like(u))

    bounded = np.any(np.isfinite(lower)) or np.any(np.isfinite(upper))
    sol = optimize.least_squares(resid_u, p0 / scale, jac=jac_u, bounds=(lower / scale, upper / scale),
                                 method="trf" if bounded else "lm",
                                 x_scale="jac", max_nfev=max_nfev, xtol=xtol, ftol=ftol, gtol=gtol)
    if sol.status > 0 and not np.any(sol.active_mask):
        # Gauss-Newton polish: near the minimum the cost is flat to
        # rounding, so the optimizer stops before the parameters are exact
        for _ in range(3):
            u = sol.x + np.linalg.lstsq(jac_u(sol.x), -sol.fun, rcond=None)[0]
            if not (np.all(u > lower / scale) and np.all(u < upper / scale)):
                break
            f = resid_u(u)
            if not np.all(np.isfinite(f)) or np.sum(f**2) > np.sum(sol.fun**2) * (1 + 1e-12):
                break
            sol.x, sol.fun = u, f
    sol.x = np.clip(sol.x * scale, lower, upper)
    if sol.status == 0:
        raise ConvergenceError(f"iteration cap reached after {sol.nfev} evaluations")
    if not np.all(np.isfinite(sol.fun)):
        raise FitError("model returned non-finite residuals at the solution")

    J = jac_u(sol.x / scale)
    n, k = y.size, p0.size
    dof = n - k
    if dof < 0:
        raise ValueError("more free parameters than data points")
    chi2 = float(np.sum(sol.fun**2))
    chi2_red = chi2 / dof if dof > 0 else np.nan
    _, s, vt = np.linalg.svd(J, full_matrices=False)
    if s[0] == 0 or s[-1] <= s[0] * np.finfo(float).eps * max(J.shape):
        raise FitError("singular Jacobian: parameters are not identifiable from the data")
    cov = (vt.T / s**2) @ vt * np.outer(scale, scale)
    if not absolute_sigma and dof > 0:
        cov = cov * chi2_red
    cov = 0.5 * (cov + cov.T)
    return FitResult(params=dict(zip(names, map(float, sol.x))), covariance=cov,
                     chi2_reduced=chi2_red, n_points=n, n_free=k, converged=bool(sol.success),
                     model=model, info={"nfev": sol.nfev, "active_mask": sol.active_mask,
                                        "residuals": sol.fun})


def _split_measured(v):
    if len(v) and isinstance(v[0], MeasuredValue):
        return np.array([m.value for m in v]), np.array([m.sigma for m in v])
    return np.asarray(v, dtype=float), None


def _line(x, slope, intercept):
    return slope * np.asarray(x) + intercept


def odr_linear(x, y, sx=None, sy=None):
    """Straight-line fit with errors on both axes.

    ``x`` and ``y`` are either sequences of :class:`MeasuredValue` or plain
    arrays with ``sx``/``sy`` given separately.  With all x errors zero the
    fit is ordinary (y-weighted) least squares.

    Returns
    -------
    FitResult with parameters ``slope`` and ``intercept``.
    """
    xv, xs = _split_measured(x)
    yv, ys = _split_measured(y)
    xs = np.zeros_like(xv) if sx is None and xs is None else np.asarray(xs if sx is None else sx, dtype=float)
    ys = None if sy is None and ys is None else np.asarray(ys if sy is None else sy, dtype=float)
    if xv.size < 3:
        raise ValueError("need at least three points")
    if np.ptp(xv) == 0:
        raise FitError("degenerate geometry: all x values equal")
    if ys is not None and np.any(ys <= 0):
        raise ValueError("y errors must be positive")

    if np.all(xs == 0):
        w = np.ones_like(yv) if ys is None else 1.0 / ys**2
        A = np.column_stack([xv, np.ones_like(xv)])
        Aw = A * w[:, None]
        cov = np.linalg.inv(A.T @ Aw)
        beta = cov @ (Aw.T @ yv)
        r = yv - A @ beta
        dof = xv.size - 2
        chi2_red = float(np.sum(w * r**2) / dof) if dof else np.nan
        if ys is None:
            cov = cov * chi2_red
        return FitResult({"slope": float(beta[0]), "intercept": float(beta[1])}, cov, chi2_red,
                         xv.size, 2, True, model=_line)

    if np.any(xs <= 0):
        raise ValueError("x errors must be all zero or all positive")
    slope0, icpt0 = np.polyfit(xv, yv, 1)
    data = _odr.RealData(xv, yv, sx=xs, sy=ys)
    out = _odr.ODR(data, _odr.unilinear, beta0=[slope0, icpt0], maxit=500, sstol=1e-14, partol=1e-13).run()
    if out.info > 3:
        raise FitError(f"ODR failed: {'; '.join(out.stopreason)}")
    cov = np.asarray(out.cov_beta) if ys is not None else np.asarray(out.cov_beta) * out.res_var
    return FitResult({"slope": float(out.beta[0]), "intercept": float(out.beta[1])}, cov,
                     float(out.res_var), xv.size, 2, True, model=_line,
                     info={"stopreason": out.stopreason})


def member_rng(seed, index):
    """Counter-based generator for ensemble member ``index``.

    Keyed on (seed, index), so a member's stream is the same whatever
    order or process it runs in.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def monte_carlo_propagate(fit_fn, fixed_inputs, n, seed=0, max_failure_fraction=0.2, map_fn=map):
    """Repeat a fit with fixed inputs drawn from their Gaussian errors.

    Parameters
    ----------
    fit_fn : callable
        ``fit_fn(inputs, rng) -> FitResult`` with ``inputs`` a dict of
        floats sampled from ``fixed_inputs``.
    fixed_inputs : dict of MeasuredValue
    n : int
    seed : int
    map_fn : callable
        Drop-in for :func:`map`, e.g. ``executor.map`` for parallel runs.

    Returns
    -------
    MonteCarloResult
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    fixed = {k: v if isinstance(v, MeasuredValue) else MeasuredValue(*v) for k, v in fixed_inputs.items()}

    def run(i):
        rng = member_rng(seed, i)
        draws = rng.standard_normal(len(fixed))
        inputs = {k: v.value + v.sigma * z for (k, v), z in zip(fixed.items(), draws)}
        try:
            return fit_fn(inputs, rng)
        except (FitError, ValueError, FloatingPointError) as exc:
            return exc

    outcomes = list(map_fn(run, range(n)))
    members = [o for o in outcomes if isinstance(o, FitResult)]
    failures = [(i, repr(o)) for i, o in enumerate(outcomes) if not isinstance(o, FitResult)]
    if len(failures) > max_failure_fraction * n or not members:
        detail = "; ".join(f"member {i}: {msg}" for i, msg in failures[:5])
        raise MonteCarloError(f"{len(failures)}/{n} ensemble fits failed ({detail})")
    return MonteCarloResult(members=members, failures=failures)


def sigma_clip(x, y, model_fit, threshold=5.0, sigma=None, side="both"):
    """Inclusion mask from one pass of residual clipping.

    ``model_fit`` is a :class:`FitResult` (or any callable of ``x``).
    Residuals are scaled by ``sigma`` when given, otherwise by a robust
    standard deviation (1.4826 times the median absolute deviation), which
    the outliers being hunted cannot inflate.  ``side='low'`` only rejects
    points below the model.
    """
    pred = model_fit.predict(x) if isinstance(model_fit, FitResult) else model_fit(x)
    r = np.asarray(y, dtype=float) - pred
    if sigma is not None:
        z = r / np.asarray(sigma, dtype=float)
    else:
        scale = 1.4826 * np.median(np.abs(r - np.median(r)))
        z = r / scale if scale > 0 else np.zeros_like(r)
    if side == "both":
        mask = np.abs(z) <= threshold
    elif side == "low":
        mask = z >= -threshold
    elif side == "high":
        mask = z <= threshold
    else:
        raise ValueError(f"unknown side {side!r}")
    if not mask.any():
        raise FitError("sigma clipping rejected every point")
    return mask


def saturation_curve(power, i_inf, p_sat, c_bg=0.0, c_dark=0.0):
    """I(P) = I_inf P / (P + P_sat) + c_bg P + c_dark"""
    power = np.asarray(power, dtype=float)
    return i_inf * power / (power + p_sat) + c_bg * power + c_dark


def fit_saturation(powers, intensities, c_bg, c_dark, sigma=None, p0=None,
                   clip_threshold=None, clip_side="both", psat_max_factor=50.0):
    """Fit I_inf and P_sat with the background terms held fixed.

    With ``clip_threshold`` the fit is done once, points beyond the
    threshold are removed, and the fit is repeated on the rest; the mask is
    returned in ``result.info['mask']``.  Without ``sigma`` the clip scale
    is a robust spread of the relative residuals, i.e. scatter is taken to
    be proportional to the rate.
    """
    P = np.asarray(powers, dtype=float)
    I = np.asarray(intensities, dtype=float)
    if P.size < 3:
        raise ValueError("need at least three points")
    p_hi = psat_max_factor * P.max()

    def model(p, i_inf, p_sat):
        return saturation_curve(p, i_inf, p_sat, c_bg, c_dark)

    if p0 is None:
        signal = I - c_bg * P - c_dark
        p0 = {"I_inf": max(float(signal.max()) * 1.5, 1e-12), "P_sat": float(np.median(P[P > 0]))}
    bounds = ([0.0, 0.0], [np.inf, p_hi])

    def once(mask):
        s = None if sigma is None else np.asarray(sigma, dtype=float)[mask]
        return least_squares(model, P[mask], I[mask], dict(p0), sigma=s, bounds=bounds)

    mask = np.ones(P.size, bool)
    res = once(mask)
    if clip_threshold is not None:
        clip_sigma = sigma
        if sigma is None:
            # count-rate scatter grows with the rate: robust scale of relative residuals
            pred = res.predict(P)
            rel = (I - pred) / pred
            clip_sigma = 1.4826 * np.median(np.abs(rel - np.median(rel))) * np.abs(pred)
            if not np.all(clip_sigma > 0):
                clip_sigma = None
        mask = sigma_clip(P, I, res, clip_threshold, sigma=clip_sigma, side=clip_side)
        res = once(mask)
    if res.params["P_sat"] >= 0.999 * p_hi:
        raise FitError("P_sat ran into its upper bound: data show no saturation")
    res.info["mask"] = mask
    return res
