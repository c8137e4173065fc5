# %% [markdown]
# # Mean queue length along the traffic-square axis
#
# For Gamma(k,1) interarrivals and Gamma(m,1) services the mean queue length
# is a series of Beta tail probabilities. With k = m = 1 it collapses to the
# M/M/1 formula, which makes a handy check.

# %%
import numpy as np

from qhidden import lhat_beta_series, lhat, GammaGamma, GIGIkApprox
from qhidden.qlength import spitzer_terms_gamma

taus = np.array([0.05, 0.25, 0.5, 0.75, 0.95])
for t in taus:
    e = lhat_beta_series(1.0, 1.0, t)
    print(f"tau={t:4.2f}  series={e.value:.12f}  closed={t / (1 - np.sqrt(t)):.12f}  terms={e.terms_used}")

# %% [markdown]
# Derivatives come out of the same sum, so convexity can be read off directly.

# %%
for k, m in [(1, 1), (2, 3), (3, 1.5)]:
    t = 0.5 * (k / m) ** 2
    e = lhat_beta_series(k, m, t)
    print(f"k={k} m={m} tau={t:.3f}: value {e.value:.6f}, d1 {e.d1:.6f}, d2 {e.d2:.6f}")

# %% [markdown]
# ## Single terms bend the wrong way
#
# The n=1 term is concave near tau=0.25, yet the partial sums straighten
# out after a handful of terms.

# %%
ns = np.arange(1, 51)
grid = np.linspace(0.05, 0.95, 7)
for t in grid:
    val, _, d2 = spitzer_terms_gamma(1.0, 1.0, ns, t)
    print(f"tau={t:.2f}  l_1''={d2[0]:+.4f}  sum_10''={d2[:10].sum():+.4f}  sum_50''={d2.sum():+.4f}")

# %% [markdown]
# The approximate multi-server formula goes through the same interface.

# %%
approx = GIGIkApprox(2, 1.0, 1.0)
print([round(lhat(approx, t).value, 6) for t in (0.1, 0.4, 0.8)])
print(lhat(GammaGamma(2.0, 2.0), 0.36).value)
