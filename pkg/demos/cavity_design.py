"""Hybrid diamond-air microcavity: field, coupling and mode dispersion.

    python3 demos/cavity_design.py
"""
import numpy as np

from cavqed.optics import (
    Cavity,
    CavityGeometry,
    dispersion_slope,
    fit_dispersion,
    hybrid_fsr,
    ideal_coupling,
    simulate_dispersion,
)
from cavqed.units import to_ghz

geo = CavityGeometry(roc=22.5e-6, t_diamond=1.05e-6, t_air=6.95e-6, waist=1.30e-6)
cav = Cavity(geo)  # quarter-wave surrogate coatings on both sides

res = ideal_coupling(cav, 6.1e-9, errors={"waist": 0.01e-6, "t_diamond": 0.02e-6, "t_air": 0.05e-6})
prof = res.profile
print(f"air gap retuned to {res.cavity.geometry.t_air * 1e6:.4f} um for 602 nm")
print(f"mode is {prof.mode_character()}-like, "
      f"E_diamond/E_air = {prof.region_max('diamond') / prof.region_max('air'):.3f}")
print(f"g0/2pi = {to_ghz(res.g0.value):.3f} +/- {to_ghz(res.g0.sigma):.3f} GHz")
print(f"hybrid FSR = {hybrid_fsr(geo) / 1e12:.2f} THz")
print(f"dL/dnu = {dispersion_slope(cav):.2f} pm/GHz")

# self-consistency: generate loci, then fit the geometry back from them
ts = np.linspace(6.5e-6, 7.4e-6, 10)
obs = []
for q in (0, 1):
    dm = simulate_dispersion(cav, ts, (595e-9, 610e-9), orders=(q,))
    obs += [(t, lam, q) for t, row in zip(dm.t_air, dm.loci[q]) for lam in row]
print(f"{len(obs)} resonances over {ts.size} gaps")

fit = fit_dispersion(cav.with_geometry(roc=22.0e-6, t_diamond=1.03e-6), obs)
print(f"refit roc = {fit.params['roc'] * 1e6:.4f} um, t_diamond = {fit.params['t_diamond'] * 1e6:.4f} um")
