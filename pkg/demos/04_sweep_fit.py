"""Fit (L, a) from a pump sweep and cross-check against brute-force grid search."""
# %%
import time

import numpy as np

from opasqueeze.estimation import Grid, agrees_with_oracle, fit_pump_sweep, oracle_fit_pump_sweep, simulate_sweep
from opasqueeze.squeezer import pct_per_w_to_si, si_to_pct_per_w

a_true, L_true = pct_per_w_to_si(1034.0), 0.386
powers = np.round(np.arange(0.03, 0.3301, 0.01), 12)
sweep = simulate_sweep(a_true, L_true, powers, jitter_db=0.1, seed=3)
print(sweep.to_csv().splitlines()[:4], "...")

# %% Levenberg-Marquardt in (logit L, log a)
fit = fit_pump_sweep(sweep)
print(f"L = {fit['L']:.4f} +- {fit.param_stderr['L']:.4f}")
print(f"a = {si_to_pct_per_w(fit['a']):.1f} +- {si_to_pct_per_w(fit.param_stderr['a']):.1f} %/W")
print(f"{fit.iterations} iterations, converged={fit.converged}")

# %% the grid oracle visits every node; zoom levels resolve the narrow valley in (L, a)
grid = Grid(l_step=0.005, a_step=0.05, a_max=55.0, refine_levels=3)
t0 = time.perf_counter()
oracle = oracle_fit_pump_sweep(sweep, grid)
print(f"\noracle L = {oracle['L']:.4f}, a = {si_to_pct_per_w(oracle['a']):.1f} %/W "
      f"({time.perf_counter() - t0:.2f} s)")
print("agree within one grid step:", agrees_with_oracle(fit, oracle, grid))

# %% with L known, a single point is enough
one = simulate_sweep(a_true, L_true, [0.33])
print("\nsingle point, L fixed:", si_to_pct_per_w(fit_pump_sweep(one, fixed_loss=L_true)["a"]), "%/W")
