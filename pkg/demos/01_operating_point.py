"""Noise levels of a degenerate OPA squeezer as pump power and loss vary."""
# %%
import numpy as np

from opasqueeze.gaussian import loss_channel, quadrature_variance, squeeze, to_db, vacuum
from opasqueeze.squeezer import OpaParams, noise_levels_db

# SHG-derived efficiency of the waveguide, in %/W, and the lumped detection loss
opa = OpaParams.from_pct_per_w(1034.0)
loss = 0.386
pump = 0.330  # W incident on the waveguide

r = opa.squeezing_parameter(pump)
print(f"squeezing parameter r = {r:.3f}")

# %% the same numbers from the covariance-matrix picture
state = loss_channel(squeeze(vacuum(), r), loss)
print("anti-squeezed quadrature: %.2f dB" % to_db(quadrature_variance(state, 0.0)))
print("squeezed quadrature:      %.2f dB" % to_db(quadrature_variance(state, np.pi / 2)))

# %% pump dependence: squeezing saturates at 10 log10(L), anti-squeezing keeps growing
floor = 10 * np.log10(loss)
print(f"\nloss-limited floor {floor:.2f} dB")
print(f"{'pump (mW)':>10s} {'sq (dB)':>9s} {'anti (dB)':>10s}")
for p_mw in (10, 30, 100, 200, 330, 500, 1000):
    m_db, p_db = noise_levels_db(opa.a, p_mw / 1000, loss)
    print(f"{p_mw:10d} {m_db:9.2f} {p_db:10.2f}")
