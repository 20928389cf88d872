import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavqed.fitting import (
    FitError,
    MeasuredValue,
    MonteCarloError,
    fit_saturation,
    least_squares,
    monte_carlo_propagate,
    odr_linear,
    saturation_curve,
    sigma_clip,
)
from cavqed.synth import saturation_data


def expo(t, a, tau, b):
    return a * np.exp(-t / tau) + b


def test_noiseless_exact_fit():
    x = np.linspace(0, 10, 50)
    y = expo(x, 100.0, 2.5, 3.0)
    res = least_squares(expo, x, y, {"a": 80.0, "tau": 2.0, "b": 1.0})
    np.testing.assert_allclose(res.values, [100.0, 2.5, 3.0], rtol=1e-10)
    assert np.max(np.abs(res.predict(x) - y)) <= 1e-10
    assert res.converged and res.n_points == 50 and res.n_free == 3


def test_linear_against_normal_equations():
    rng = np.random.default_rng(0)
    x = np.linspace(-3, 7, 40)
    s = 0.2 + 0.1 * rng.random(40)
    y = 1.7 * x - 0.4 + s * rng.standard_normal(40)
    res = least_squares(lambda x, m, c: m * x + c, x, y, [1.0, 0.0], sigma=s)
    A = np.column_stack([x, np.ones_like(x)]) / s[:, None]
    cov = np.linalg.inv(A.T @ A)
    beta = cov @ A.T @ (y / s)
    np.testing.assert_allclose(res.values, beta, rtol=0, atol=1e-10)
    np.testing.assert_allclose(res.covariance, cov, rtol=1e-6)


def test_covariance_psd_and_chi2():
    x = np.linspace(0, 10, 400)
    chi = []
    for seed in range(50):
        y = expo(x, 50.0, 3.0, 5.0) + np.random.default_rng(seed).standard_normal(400)
        res = least_squares(expo, x, y, [40.0, 2.0, 4.0], sigma=np.ones(400))
        assert np.all(np.linalg.eigvalsh(res.covariance) >= 0)
        chi.append(res.chi2_reduced)
    # 3/sqrt(dof) is about two standard deviations of the reduced chi-square
    assert np.mean(np.abs(np.array(chi) - 1) < 3 / np.sqrt(397)) > 0.9
    assert np.mean(chi) == pytest.approx(1.0, abs=3 * np.sqrt(2 / 397 / 50))


def test_poisson_pulls():
    t = np.linspace(0, 10, 60)
    pulls = []
    for seed in range(200):
        counts = np.random.default_rng(seed).poisson(expo(t, 200.0, 2.0, 2.0))
        r = least_squares(expo, t, counts, {"a": 150.0, "tau": 2.5, "b": 1.0}, poisson=True,
                          scale=[100.0, 1.0, 1.0])
        pulls.append((r.params["tau"] - 2.0) / r.errors["tau"])
    assert abs(np.mean(pulls)) < 3 / np.sqrt(200)
    assert 0.85 < np.std(pulls) < 1.15


def test_determinism():
    rng = np.random.default_rng(2)
    x = np.linspace(0, 10, 100)
    y = expo(x, 10, 2, 1) + 0.1 * rng.standard_normal(100)
    a = least_squares(expo, x, y, [8, 3, 0.5])
    b = least_squares(expo, x, y, [8, 3, 0.5])
    assert np.array_equal(a.values, b.values) and np.array_equal(a.covariance, b.covariance)


def test_least_squares_errors():
    x = np.linspace(0, 1, 10)
    with pytest.raises(ValueError, match="non-finite"):
        least_squares(expo, x, np.r_[np.nan, np.ones(9)], [1, 1, 0])
    with pytest.raises(FitError):
        # the amplitude and the baseline are indistinguishable on a flat model
        least_squares(lambda x, a, b: (a + b) * np.ones_like(x), x, np.ones(10), [1.0, 1.0])


# ---------------------------------------------------------------- ODR

def test_odr_zero_x_errors_is_ols():
    rng = np.random.default_rng(3)
    x = np.linspace(0, 5, 20)
    y = 2 * x + 1 + 0.1 * rng.standard_normal(20)
    res = odr_linear(x, y, sx=np.zeros(20), sy=np.full(20, 0.1))
    slope, icpt = np.polyfit(x, y, 1)
    assert res.params["slope"] == pytest.approx(slope, rel=1e-10)
    assert res.params["intercept"] == pytest.approx(icpt, rel=1e-10)


def test_odr_measured_value_input():
    x = [MeasuredValue(v, 0.1) for v in (1.0, 2.0, 3.0, 4.0)]
    y = [MeasuredValue(2 * v + 1, 0.2) for v in (1.0, 2.0, 3.0, 4.0)]
    res = odr_linear(x, y)
    assert res.params["slope"] == pytest.approx(2.0, rel=1e-8)
    assert res.params["intercept"] == pytest.approx(1.0, rel=1e-8)


def test_odr_pulls():
    x0 = np.linspace(0, 10, 15)
    sx, sy = 0.3, 0.5
    ps, pi = [], []
    for seed in range(200):
        rng = np.random.default_rng(seed)
        x = x0 + sx * rng.standard_normal(15)
        y = 1.5 * x0 + 2.0 + sy * rng.standard_normal(15)
        r = odr_linear(x, y, sx=np.full(15, sx), sy=np.full(15, sy))
        ps.append((r.params["slope"] - 1.5) / r.errors["slope"])
        pi.append((r.params["intercept"] - 2.0) / r.errors["intercept"])
    for p in (ps, pi):
        assert abs(np.mean(p)) < 0.25
        assert 0.8 < np.std(p) < 1.2


def test_odr_swap_axes():
    rng = np.random.default_rng(4)
    x0 = np.linspace(1, 10, 30)
    x = x0 + 0.2 * rng.standard_normal(30)
    y = 3 * x0 + 0.6 * rng.standard_normal(30)
    sx, sy = np.full(30, 0.2), np.full(30, 0.6)
    a = odr_linear(x, y, sx=sx, sy=sy)
    b = odr_linear(y, x, sx=sy, sy=sx)
    inv = 1 / b.params["slope"]
    err = np.hypot(a.errors["slope"], b.errors["slope"] * inv**2)
    assert abs(a.params["slope"] - inv) < err


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 100.0))
def test_odr_error_rescale_invariance(k):
    rng = np.random.default_rng(5)
    x = np.linspace(0, 10, 12) + 0.2 * rng.standard_normal(12)
    y = 2 * np.linspace(0, 10, 12) + 0.4 * rng.standard_normal(12)
    sx, sy = 0.2 + 0.05 * rng.random(12), 0.4 + 0.1 * rng.random(12)
    a = odr_linear(x, y, sx=sx, sy=sy)
    b = odr_linear(x, y, sx=k * sx, sy=k * sy)
    # equal up to the optimizer's sum-of-squares tolerance, far below the fit error
    for name in ("slope", "intercept"):
        assert abs(b.params[name] - a.params[name]) < 1e-4 * a.errors[name]


def test_odr_errors():
    with pytest.raises(ValueError):
        odr_linear([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(FitError, match="degenerate"):
        odr_linear([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


# ---------------------------------------------------------------- Monte Carlo

def _mc_fit(inputs, rng):
    x = np.linspace(0, 5, 20)
    y = inputs["m"] * x + inputs["c"]
    return least_squares(lambda x, m, c: m * x + c, x, y, {"m": 1.0, "c": 0.0})


def test_mc_zero_sigma():
    mc = monte_carlo_propagate(_mc_fit, {"m": MeasuredValue(2.0), "c": MeasuredValue(1.0)}, 10)
    s = mc.summary()
    assert s["m"]["std"] == 0.0 and s["m"]["mean"] == pytest.approx(2.0)


def test_mc_reproducible_and_order_independent():
    fixed = {"m": MeasuredValue(2.0, 0.1), "c": MeasuredValue(1.0, 0.5)}
    a = monte_carlo_propagate(_mc_fit, fixed, 20, seed=7)
    b = monte_carlo_propagate(_mc_fit, fixed, 20, seed=7,
                              map_fn=lambda f, it: reversed([f(i) for i in reversed(list(it))]))
    np.testing.assert_array_equal(a.samples("m"), b.samples("m"))
    assert a.summary()["m"]["std"] == pytest.approx(0.1, rel=0.4)


def test_mc_mean_matches_central_fit():
    fixed = {"m": MeasuredValue(2.0, 0.1), "c": MeasuredValue(1.0, 0.5)}
    mc = monte_carlo_propagate(_mc_fit, fixed, 200, seed=1)
    s = mc.summary()
    central = _mc_fit({"m": 2.0, "c": 1.0}, None).params["c"]
    assert abs(s["c"]["mean"] - central) < 3 * s["c"]["std"] / np.sqrt(200)


def test_mc_failure_abort():
    def flaky(inputs, rng):
        if rng.random() < 0.5:
            raise FitError("nope")
        return _mc_fit(inputs, rng)

    with pytest.raises(MonteCarloError, match="ensemble fits failed"):
        monte_carlo_propagate(flaky, {"m": MeasuredValue(2.0), "c": MeasuredValue(1.0)}, 40)
    with pytest.raises(ValueError):
        monte_carlo_propagate(_mc_fit, {}, 0)


# ---------------------------------------------------------------- clipping

def _line_fit(x, y):
    return least_squares(lambda x, m, c: m * x + c, x, y, [1.0, 0.0])


def test_clip_clean_data():
    rng = np.random.default_rng(6)
    x = np.linspace(0, 10, 100)
    y = x + 0.1 * rng.standard_normal(100)
    assert sigma_clip(x, y, _line_fit(x, y), 5.0).all()
    assert sigma_clip(x, y, _line_fit(x, y), np.inf).all()


def test_clip_single_outlier():
    rng = np.random.default_rng(7)
    x = np.linspace(0, 10, 100)
    y = x + 0.1 * rng.standard_normal(100)
    y[37] += 1.0
    mask = sigma_clip(x, y, _line_fit(x, y), 5.0)
    assert np.flatnonzero(~mask).tolist() == [37]


def test_clip_idempotent():
    rng = np.random.default_rng(8)
    x = np.linspace(0, 10, 60)
    y = x + 0.1 * rng.standard_normal(60)
    y[[5, 40]] -= 2.0
    fit = _line_fit(x, y)
    m1 = sigma_clip(x, y, fit, 5.0)
    m2 = sigma_clip(x[m1], y[m1], fit.predict, 5.0)
    assert m2.all()
    np.testing.assert_array_equal(m1, sigma_clip(x, y, fit, 5.0))


def test_clip_all_rejected():
    with pytest.raises(FitError):
        sigma_clip(np.arange(3.0), np.zeros(3), lambda x: x + 10.0, 1.0, sigma=np.ones(3))


# ---------------------------------------------------------------- saturation

POWERS = np.linspace(2, 200, 25)


def test_saturation_half_point():
    i_inf, p_sat, cb, cd = 1e5, 52.0, 30.0, 200.0
    assert saturation_curve(p_sat, i_inf, p_sat, cb, cd) - cb * p_sat - cd == pytest.approx(i_inf / 2)


def test_saturation_recovers_psat():
    P, I, _ = saturation_data(POWERS, 1e5, 52.0, c_bg=30.0, c_dark=200.0, rng=1)
    res = fit_saturation(P, I, 30.0, 200.0, sigma=0.05 * saturation_curve(P, 1e5, 52.0, 30.0, 200.0))
    assert abs(res.params["P_sat"] - 52.0) < 3 * res.errors["P_sat"]


def test_saturation_two_run_clip_unbiased():
    est = []
    for seed in range(40):
        P1, I1, _ = saturation_data(POWERS, 1e5, 52.0, c_bg=30.0, scatter=0.03, outliers=2, rng=2 * seed)
        P2, I2, _ = saturation_data(POWERS + 1.0, 1e5, 52.0, c_bg=30.0, scatter=0.06, outliers=2,
                                    rng=2 * seed + 1)
        P, I = np.r_[P1, P2], np.r_[I1, I2]
        est.append(fit_saturation(P, I, 30.0, 0.0, clip_threshold=5.0).params["P_sat"])
    est = np.array(est)
    assert abs(est.mean() - 52.0) < 3 * est.std(ddof=1) / np.sqrt(est.size)


def test_saturation_unsaturated():
    P = np.linspace(1, 10, 10)
    with pytest.raises(FitError, match="no saturation"):
        fit_saturation(P, 3.0 * P, 0.0, 0.0)
