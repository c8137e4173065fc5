# %% [markdown]
# # A two-station tandem line
#
# Station 1 sends half its output to station 2. Revenue comes from exogenous
# admissions; every station pays for its service rate.

# %%
import numpy as np

from qhidden import EconomicSpec, JacksonInstance, Linear, PowerCost, RateBox, SolveConfig, solve_jackson
from qhidden.solve import jackson_grid_oracle

net = JacksonInstance(np.array([[0.0, 0.5], [0.0, 0.0]]),
                      EconomicSpec(Linear(1.0, 2.0), PowerCost(1.0, 2.0)),
                      RateBox(0.1, 0.6, 1.0, 2.0))
print("traffic map:\n", net.traffic_map())

# %%
rep = solve_jackson(net, SolveConfig(restarts=16))
lam, mu = rep.best_point[:2], rep.best_point[2:]
print("exogenous", lam, "service", mu, "value", rep.best_value)
print("total arrivals", rep.extras["total_arrivals"], "balance residual", rep.extras["balance_residual"])

# %%
pt, val = jackson_grid_oracle(net, 21)
print("grid oracle", pt, val, "gap", rep.best_value - val)
