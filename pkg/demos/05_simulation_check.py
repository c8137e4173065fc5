# %% [markdown]
# # Checking the series against a Lindley simulation

# %%
from qhidden import MM1, GammaGamma, SimConfig, lq, simulate_wait

cfg = SimConfig(horizon=200_000, replications=32, seed=7)
for fam, lam, mu in [(MM1(), 1.0, 2.0), (GammaGamma(2.0, 2.0), 0.6, 1.0), (GammaGamma(1.0, 3.0), 0.2, 1.0)]:
    sim = simulate_wait(fam, lam, mu, cfg)
    exact = lq(fam, lam / mu).value
    print(f"{type(fam).__name__:10s} rho={lam / mu:.2f}  sim {sim.mean_queue:.4f} +- {sim.ci_halfwidth:.4f}"
          f"  series {exact:.4f}  z={(sim.mean_queue - exact) / sim.ci_halfwidth:+.2f}")

# %% [markdown]
# Same seed, same answer.

# %%
print(simulate_wait(MM1(), 1.0, 2.0, SimConfig(horizon=10_000, replications=4, seed=3)) ==
      simulate_wait(MM1(), 1.0, 2.0, SimConfig(horizon=10_000, replications=4, seed=3)))
