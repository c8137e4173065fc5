# %% [markdown]
# # Admission and service-rate control, three ways
#
# Minimize L_q(lambda/mu) + c(mu) - r(lambda) over a box. In (lambda, mu) the
# objective need not be convex; squaring the service rate makes it convex.
# Both reach the same optimum.

# %%
import numpy as np

from qhidden import (EconomicSpec, GammaGamma, Logit, Parameterization as P, PowerCost, ProblemInstance,
                     RateBox, SolveConfig, grid_oracle, projected_gd)
from qhidden.reform import objective_hessian, strong_convexity_modulus_r2

inst = ProblemInstance(GammaGamma(1.0, 1.0), RateBox(0.1, 0.6, 1.0, 2.0),
                       EconomicSpec(Logit(1.0), PowerCost(1.0, 2.0), alpha_r=1.0))

# %%
for param in (P.ORIGINAL, P.R2):
    rep = projected_gd(param, inst, SolveConfig(restarts=16, oracle_grid=21))
    vals = np.array([r.value for r in rep.runs])
    print(f"{param.value:8s} best {rep.best_point}  f={rep.best_value:.10f}  "
          f"spread over restarts {vals.max() - vals.min():.1e}  oracle gap {rep.oracle_gap:.1e}")

# %% [markdown]
# Curvature: the smallest Hessian eigenvalue on a grid of each variant's box.

# %%
from qhidden.reform import transformed_bounds

for param in (P.ORIGINAL, P.R2):
    lo, hi = transformed_bounds(param, inst.box)
    eigs = [np.linalg.eigvalsh(objective_hessian(param, inst, [a, b]))[0]
            for a in np.linspace(lo[0], hi[0], 15) for b in np.linspace(lo[1], hi[1], 15)]
    print(f"{param.value:8s} min eigenvalue {min(eigs):+.3e}")

print("lower bound on the R2 modulus:", strong_convexity_modulus_r2(
    ProblemInstance(GammaGamma(1.0, 1.0), RateBox(0.5, 0.8, 1.0, 2.0), inst.econ)))

# %% [markdown]
# A brute-force grid agrees.

# %%
print(grid_oracle("original", inst, 41))

# %% [markdown]
# With a steep linear price and free service the original Hessian turns
# indefinite, while the queue term stays convex in the squared coordinates.

# %%
from qhidden import MM1, Linear

steep = ProblemInstance(MM1(), RateBox(0.05, 0.9, 0.95, 3.0), EconomicSpec(Linear(100.0, 1.0), PowerCost(0.0, 2.0)))
for param in (P.ORIGINAL, P.R2):
    lo, hi = transformed_bounds(param, steep.box)
    eigs = [np.linalg.eigvalsh(objective_hessian(param, steep, [a, b]))[0]
            for a in np.linspace(lo[0], hi[0], 15) for b in np.linspace(lo[1], hi[1], 15)]
    print(f"{param.value:8s} min eigenvalue {min(eigs):+.3e}")
