"""Purcell-shortened lifetime of a GeV center in a vibrating open cavity.

Walks from the rates of the coupled system to a synthetic delay histogram
and back again through the constrained lifetime fit.

    python3 demos/gev1_lifetime.py
"""
import numpy as np

from cavqed.cqed import cooperativities, gev1_params, lifetime_reduction
from cavqed.decay import apparent_lifetime, fit_constrained_lifetime
from cavqed.efficiency import EfficiencyLedger, qe_bound
from cavqed.fitting import MeasuredValue
from cavqed.synth import decay_histogram
from cavqed.units import from_ghz, rate_from_lifetime, to_ghz

TAU = 6.1e-9
SIGMA_NU = from_ghz(1.796)   # rms cavity detuning from vibrations
SIGMA_T = 196e-12            # detector jitter


def main():
    p = gev1_params()
    c_inc, c = cooperativities(p)
    print(f"C_inc = {c_inc:.2f}, C = {c:.3f}")
    print(f"on-resonance lifetime reduction: {lifetime_reduction(p, TAU):.2f}")

    # vibrations sweep the cavity through the line and wash the enhancement out
    for s in (0.0, 1.0, 1.796, 3.0):
        tau, _ = apparent_lifetime(p, from_ghz(s), SIGMA_T)
        print(f"  sigma_nu/2pi = {s:5.3f} GHz -> apparent lifetime {tau * 1e9:.3f} ns")

    hist, _ = decay_histogram(p, SIGMA_NU, SIGMA_T, events=1_000_000, rng=1)
    fixed = {
        "kappa": MeasuredValue(from_ghz(2.07), from_ghz(0.06)),
        "gamma": MeasuredValue(rate_from_lifetime(TAU), 0.0),
        "pump": MeasuredValue(from_ghz(0.08), from_ghz(0.01)),
        "sigma_nu": MeasuredValue(SIGMA_NU, from_ghz(0.006)),
    }
    constraint = {"delta_cw": MeasuredValue(from_ghz(8.9), from_ghz(0.2)),
                  "kappa_prime": MeasuredValue(from_ghz(5.8), from_ghz(0.1))}
    fit = fit_constrained_lifetime(hist, fixed, constraint, n_mc=10, seed=0)
    g = MeasuredValue(to_ghz(fit.g.value), to_ghz(fit.g.sigma))
    print(f"recovered g/2pi = {g} GHz (truth 0.36), gamma*/2pi = {to_ghz(fit.gamma_star.value):.2f} GHz")
    print(f"C_inc = {fit.c_inc}, C = {fit.c}")

    # how efficient must the emitter be to reach that coupling?
    bound = qe_bound(g, MeasuredValue(0.80, 0.04), EfficiencyLedger(eta_dw=0.6))
    print(f"quantum efficiency > {bound}")
    resid = hist.counts - np.mean(fit.band, axis=0)
    print(f"rms residual against the ensemble band: {np.sqrt(np.mean(resid**2)):.1f} counts")


if __name__ == "__main__":
    main()
