"""Recover a pi0 (eta, pT) spectrum from its decay photons.

Each pi0 decays isotropically into two photons; the photon spectrum is the
pi0 spectrum folded with a Monte Carlo response, and the series iteration
undoes the folding.

Run: python3 demos/pi0_photons.py   (about half a minute)
"""

import numpy as np

from seriesunfold import Axis, DecayConfig, MomentumBinning, decay_to_gammas, run_pi0_experiment, sample_pi0
from seriesunfold.pi0 import PI0_MASS, to_eta_pt

# %% a few decays
rng = np.random.default_rng(3)
p = sample_pi0(DecayConfig(), rng, 3)
k1, k2 = decay_to_gammas(p, PI0_MASS, rng)
for i in range(3):
    print(f"pi0 E={p.e[i]:.3f}  photons {k1.e[i]:.3f} + {k2.e[i]:.3f}")
print("photon (eta, pT):", np.round(to_eta_pt(k1), 3).T.tolist())

# %% the full chain at 1e5 events
binning = MomentumBinning(Axis(-2, 2, 40), Axis(0, 2, 40))
r = run_pi0_experiment(DecayConfig(seed=0), 10**5, binning)
print(f"\nstop {r.report.stop_reason} after {r.report.n} iterations, L1 to truth {r.l1:.3f}")
print("Cauchy index (every 5th):", np.round(r.cauchy_trace[::5], 3))
print("saturation level:", round(r.cauchy_saturation, 3))
t, u = r.slices[0.0]
print("\neta=0 slice, first pT bins   truth:", np.round(t.values[:6], 2))
print("                          unfolded:", np.round(u.values[:6], 2))
