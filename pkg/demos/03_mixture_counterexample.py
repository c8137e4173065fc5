# %% [markdown]
# # When the squared-traffic curve is not convex
#
# Take S and T both an equal mix of Exp(0.1) and Exp(10). The first term's
# slope near tau=0 dwarfs an upper bound on the whole slope at tau=0.01, so the
# derivative decreases somewhere and convexity fails.

# %%
from qhidden.landscape import counterexample, counterexample_mc, mixture_l1_prime

r = counterexample()
print(f"slope lower bound at tau={r.tau1:g}: {r.lower_bound_at_tau1:.4f}")
print(f"slope upper bound at tau={r.tau2:g}: {r.upper_bound_at_tau2:.4f}")
print("separated:", r.separation)
for name, ok in r.checks.items():
    print(f"  {name:18s} {'ok' if ok else 'FAILS'}  (threshold {r.thresholds[name]})")

# %% [markdown]
# The first term alone, on a log grid.

# %%
import numpy as np

for t in np.geomspace(1e-6, 0.5, 8):
    print(f"tau={t:.2e}  l_1'={mixture_l1_prime((0.1, 10.0), t):10.4f}")

# %% [markdown]
# Monte Carlo slopes point the same way (noisy, not a proof).

# %%
a, b = counterexample_mc()
print(f"MC slope at tau1 {a.d1:.2f}, at tau2 {b.d1:.2f}")
