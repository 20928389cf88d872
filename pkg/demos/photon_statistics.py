"""Antibunching and intensity-gated lifetimes from raw time tags.

    python3 demos/photon_statistics.py
"""
import numpy as np

from cavqed.correlation import fit_g2, fit_gated_rates, hbt_postselect, intensity_gated_rates
from cavqed.synth import antibunched_stream, swept_cavity_stream

# two detectors behind a beam splitter, emitter with a weak shelving state
stream = antibunched_stream(duration=0.2, shelving_prob=0.02, shelving_time=30e-9, rng=3)
hbt = hbt_postselect(stream)
print(f"{len(hbt.windows_used)}/{hbt.n_windows} windows kept, "
      f"{hbt.histogram.counts.sum()} coincidences")

res = fit_g2(hbt, 1.0)
for k in res.names:
    print(f"  {k:8s} {res[k]}")
print(f"g2(0) including detector jitter: {res.info['g2_0']:.3f}")

# vibrations sweep the cavity; bright moments are the resonant ones
swept = swept_cavity_stream(rng=1)
gated = intensity_gated_rates(swept, 8)
for r, d in zip(gated.rate, gated.decay_rate):
    print(f"  rate {r.value:9.0f} /s   decay {d.value / 1e9:.3f} +/- {d.sigma / 1e9:.3f} /ns")
line, tau = fit_gated_rates(gated)
print(f"zero-intensity intercept gives the bulk lifetime {tau.value * 1e9:.2f} +/- {tau.sigma * 1e9:.2f} ns")
print(f"slope {line['slope']}")
print(f"rate range {np.ptp([r.value for r in gated.rate]):.0f} /s")
