"""Build small Gaussian states by hand and read off parity and click statistics.

Run: python3 demos/01_gaussian_states.py
"""
import numpy as np

from gbbm import gaussian as gs
from gbbm import observables as ob
from gbbm import sampler as sp

# A coherent state with alpha = 0.5 carries a quarter of a photon on average.
coh = gs.apply(gs.vacuum(1), gs.displacement([0.5]))
print("coherent state, mean photons:", coh.photon_number())
print("  <parity>   =", ob.parity_expval(coh, [0]), " closed form e^{-2 a^2} =", np.exp(-0.5))
print("  <no-click> =", ob.threshold_expval(coh, [0]), " closed form 2e^{-a^2}-1 =", 2 * np.exp(-0.25) - 1)

# Two-mode squeezing: squeeze the two modes in opposite directions and mix them
# on a balanced beamsplitter. Each half alone looks thermal.
r = 0.4
tms = gs.apply(gs.vacuum(2), gs.beamsplitter(np.pi / 4, 0.0, (0, 1), 2) @ gs.squeezer([r, -r]))
print("\ntwo-mode squeezed vacuum, reduced covariance of mode 0:")
print(gs.reduce(tms, [0]).sigma, " (cosh 2r =", np.cosh(2 * r), ")")

# Photons come in pairs, so the joint parity is always even.
table = sp.parity_probs(tms)
for k, p in enumerate(table.probabilities):
    print(f"  outcome {sp.index_to_bits([k], 2)[0]}: {p:.4f}")

samples = sp.sample_threshold(tms, 10, np.random.default_rng(0))
print("\nten threshold-detector samples:\n", samples.rows)
