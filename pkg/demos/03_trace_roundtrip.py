"""Simulate a phase-scanned zero-span trace and fit the noise levels back out."""
# %%
import numpy as np

from opasqueeze.estimation import fit_trace
from opasqueeze.gaussian import to_db
from opasqueeze.squeezer import noise_levels, pct_per_w_to_si
from opasqueeze.traces import ScanConfig, shot_reference, synthesize

r_minus, r_plus = noise_levels(pct_per_w_to_si(1034.0), 0.330, 0.386)
print(f"true levels: {to_db(r_plus):.3f} / {to_db(r_minus):.3f} dB")

# 1 Hz triangle scan, 2 s at 1 kS/s, 0.1 dB jitter smoothed at 510 Hz VBW
cfg = ScanConfig(phase_offset=0.4, rng_seed=7)
trace = synthesize(cfg, r_plus, r_minus)
shot = shot_reference(cfg)
print(f"{len(trace)} samples, trace spans {trace.power_db.min():.2f} .. {trace.power_db.max():.2f} dB")
print(f"shot reference mean {shot.power_db.mean():+.4f} dB")

# %% crude ascii view of the first scan period
step = 25
for t, y in zip(trace.t[:1000:step], trace.power_db[:1000:step]):
    col = int(round((y + 5) * 3))
    print(f"{t:5.3f} s |" + " " * col + "*")

# %% the fit models the same smoothing, so it is unbiased by the filter
fit = fit_trace(trace)
print(f"\nfitted R+ = {fit.extra['R_plus_db']:.3f} dB, R- = {fit.extra['R_minus_db']:.3f} dB")
print(f"fitted offset = {fit['phase_offset']:.3f} rad (true {cfg.phase_offset})")

# %% spread over seeds
errs = []
for seed in range(10):
    f = fit_trace(synthesize(ScanConfig(rng_seed=seed), r_plus, r_minus))
    errs.append(f.extra["R_minus_db"] - to_db(r_minus))
print(f"R- error over 10 seeds: mean {np.mean(errs):+.4f} dB, std {np.std(errs):.4f} dB")
