"""Rate control of single-server queues through hidden-convex reformulations."""

__version__ = "0.1.0"

from .model import (MM1, MG1, ExpMixture, GammaGamma, GIGIkApprox, RateBox, Linear, Logit, PowerPrice,
                    PowerCost, EconomicSpec, ProblemInstance, validate)
from .qlength import SeriesConfig, lhat, lq, lhat_beta_series, lhat_closed, lhat_spitzer_mc
from .reform import Parameterization, objective, transform_point, inverse_transform
from .solve import SolveConfig, projected_gd, grid_oracle, JacksonInstance, solve_jackson
from .simulate import SimConfig, simulate_wait

__all__ = [
    "MM1", "MG1", "ExpMixture", "GammaGamma", "GIGIkApprox", "RateBox", "Linear", "Logit", "PowerPrice",
    "PowerCost", "EconomicSpec", "ProblemInstance", "validate", "SeriesConfig", "lhat", "lq",
    "lhat_beta_series", "lhat_closed", "lhat_spitzer_mc", "Parameterization", "objective",
    "transform_point", "inverse_transform", "SolveConfig", "projected_gd", "grid_oracle",
    "JacksonInstance", "solve_jackson", "SimConfig", "simulate_wait",
]
