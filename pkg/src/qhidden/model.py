"""Queue families, revenue/cost primitives, rate boxes and instance validation.

Conventions
-----------
Interarrival and service times are ``T_n / lambda`` and ``S_n / mu`` where
``T_n, S_n`` are drawn from the family's base law. For :class:`GammaGamma`
the base laws are Gamma(k, 1) and Gamma(m, 1) (means k and m), so the system
is stable iff ``lambda / mu < k / m``. Every other family has unit-mean base
laws and is stable iff ``lambda / mu < 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "MM1", "GammaGamma", "MG1", "GIGIkApprox", "ExpMixture", "QueueFamily",
    "RateBox", "Linear", "Logit", "PowerPrice", "CustomRevenue", "PowerCost",
    "CustomCost", "EconomicSpec", "ProblemInstance", "Violation",
    "ValidationReport", "AssumptionCheck", "validate", "revenue", "revenue_grad",
    "cost", "cost_grad", "concavity_modulus", "check_r1_conditions",
    "check_r2_conditions", "sqrt_revenue_concave_region", "family_from_dict",
    "family_to_dict", "instance_from_dict", "instance_to_dict", "econ_from_dict",
    "econ_to_dict", "box_from_dict", "box_to_dict", "to_unit_mean_box",
]

CONVEXITY_TOL = 1e-8
GRID_STEPS = 1000


# ---------------------------------------------------------------------------
# queue families


@dataclass(frozen=True)
class MM1:
    """Exponential interarrival and service times."""

    @property
    def stability_bound(self) -> float:
        return 1.0


@dataclass(frozen=True)
class GammaGamma:
    """T ~ Gamma(k, 1), S ~ Gamma(m, 1)."""

    k: float
    m: float

    @property
    def stability_bound(self) -> float:
        return self.k / self.m


@dataclass(frozen=True)
class MG1:
    """Poisson arrivals, unit-mean service with variance ``var_s``."""

    var_s: float

    @property
    def stability_bound(self) -> float:
        return 1.0


@dataclass(frozen=True)
class GIGIkApprox:
    """Approximate GI/GI/k queue length ((Var T + Var S)/2) rho^sqrt(2(k+1)) / (1 - rho)."""

    servers: int
    var_t: float
    var_s: float

    @property
    def stability_bound(self) -> float:
        return 1.0


@dataclass(frozen=True)
class ExpMixture:
    """Hyperexponential law used for both S_n and T_n (i.i.d.)."""

    rates: tuple
    weights: tuple

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @property
    def stability_bound(self) -> float:
        return 1.0

    @property
    def mean(self) -> float:
        return sum(w / r for r, w in zip(self.rates, self.weights))

    def mgf(self, t: float) -> float:
        """E[exp(t X)] for t below the smallest rate."""
        return sum(w * r / (r - t) for r, w in zip(self.rates, self.weights))

    def tilted_mean(self, t: float) -> float:
        """E[X exp(t X)]."""
        return sum(w * r / (r - t) ** 2 for r, w in zip(self.rates, self.weights))


QueueFamily = Union[MM1, GammaGamma, MG1, GIGIkApprox, ExpMixture]


@dataclass(frozen=True)
class RateBox:
    lambda_lo: float
    lambda_hi: float
    mu_lo: float
    mu_hi: float

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.lambda_lo, self.mu_lo])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.lambda_hi, self.mu_hi])

    def contains(self, lam: float, mu: float, slack: float = 1e-12) -> bool:
        return (self.lambda_lo - slack <= lam <= self.lambda_hi + slack
                and self.mu_lo - slack <= mu <= self.mu_hi + slack)


# ---------------------------------------------------------------------------
# revenue and cost families


@dataclass(frozen=True)
class Linear:
    """Revenue from linear demand lambda = b - a p: r = (b lambda - lambda^2) / a."""

    a: float
    b: float

    def value(self, lam):
        return (self.b * lam - lam * lam) / self.a

    def grad(self, lam):
        return (self.b - 2.0 * lam) / self.a

    def hess(self, lam):
        return np.full_like(np.asarray(lam, dtype=float), -2.0 / self.a)[()]

    def domain_check(self, lam):
        pass


@dataclass(frozen=True)
class Logit:
    """Revenue from logit demand: r = lambda ln(1-lambda) - lambda ln(lambda) + a lambda."""

    a: float

    def domain_check(self, lam):
        lam = np.asarray(lam)
        if np.any(~((lam > 0.0) & (lam < 1.0))):
            raise ValueError("logit revenue is defined only for 0 < lambda < 1")

    def value(self, lam):
        self.domain_check(lam)
        return lam * np.log1p(-lam) - lam * np.log(lam) + self.a * lam

    def grad(self, lam):
        self.domain_check(lam)
        return np.log1p(-lam) - lam / (1.0 - lam) - np.log(lam) - 1.0 + self.a

    def hess(self, lam):
        self.domain_check(lam)
        return -1.0 / (1.0 - lam) - 1.0 / (1.0 - lam) ** 2 - 1.0 / lam


@dataclass(frozen=True)
class PowerPrice:
    """Revenue from demand lambda = p^-gamma, i.e. r = lambda^(1 - 1/gamma)."""

    gamma: float

    def domain_check(self, lam):
        if np.any(np.asarray(lam) <= 0.0):
            raise ValueError("power-price revenue needs lambda > 0")

    def value(self, lam):
        self.domain_check(lam)
        return lam ** (1.0 - 1.0 / self.gamma)

    def grad(self, lam):
        self.domain_check(lam)
        e = 1.0 - 1.0 / self.gamma
        return e * lam ** (e - 1.0)

    def hess(self, lam):
        self.domain_check(lam)
        e = 1.0 - 1.0 / self.gamma
        return e * (e - 1.0) * lam ** (e - 2.0)


@dataclass(frozen=True)
class CustomRevenue:
    """User-supplied revenue; ``hess`` falls back to a central difference."""

    fn: Callable
    grad_fn: Callable
    hess_fn: Optional[Callable] = None

    def domain_check(self, lam):
        pass

    def value(self, lam):
        return self.fn(lam)

    def grad(self, lam):
        return self.grad_fn(lam)

    def hess(self, lam):
        if self.hess_fn is not None:
            return self.hess_fn(lam)
        h = 1e-5 * max(1.0, abs(float(lam)))
        return (self.grad_fn(lam + h) - self.grad_fn(lam - h)) / (2 * h)


@dataclass(frozen=True)
class PowerCost:
    """c(mu) = alpha mu^gamma."""

    alpha: float
    gamma: float

    def value(self, mu):
        return self.alpha * mu ** self.gamma

    def grad(self, mu):
        return self.alpha * self.gamma * mu ** (self.gamma - 1.0)

    def hess(self, mu):
        return self.alpha * self.gamma * (self.gamma - 1.0) * mu ** (self.gamma - 2.0)


@dataclass(frozen=True)
class CustomCost:
    fn: Callable
    grad_fn: Callable
    hess_fn: Optional[Callable] = None

    def value(self, mu):
        return self.fn(mu)

    def grad(self, mu):
        return self.grad_fn(mu)

    def hess(self, mu):
        if self.hess_fn is not None:
            return self.hess_fn(mu)
        h = 1e-5 * max(1.0, abs(float(mu)))
        return (self.grad_fn(mu + h) - self.grad_fn(mu - h)) / (2 * h)


@dataclass(frozen=True)
class EconomicSpec:
    revenue: object
    cost: object
    alpha_r: float = 0.0


@dataclass(frozen=True)
class ProblemInstance:
    queue: QueueFamily
    box: RateBox
    econ: EconomicSpec


def revenue(econ: EconomicSpec, lam):
    return econ.revenue.value(lam)


def revenue_grad(econ: EconomicSpec, lam):
    return econ.revenue.grad(lam)


def cost(econ: EconomicSpec, mu):
    return econ.cost.value(mu)


def cost_grad(econ: EconomicSpec, mu):
    return econ.cost.grad(mu)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __iter__(self):
        return iter(self.violations)

    def __len__(self):
        return len(self.violations)

    def codes(self) -> list:
        return [v.code for v in self.violations]


def concavity_modulus(rev, lo: float, hi: float, n: int = 1001) -> float:
    """min of -r'' over [lo, hi], estimated by second differences on an n-point grid."""
    x = np.linspace(lo, hi, n)
    h = x[1] - x[0]
    if h == 0.0:
        return float(-rev.hess(lo))
    f = np.asarray(rev.value(x), dtype=float)
    second = (f[:-2] - 2.0 * f[1:-1] + f[2:]) / (h * h)
    return float(np.min(-second))


def _family_violations(q) -> list:
    out = []
    if isinstance(q, GammaGamma):
        if not (q.k >= 1 and q.m >= 1):
            out.append(Violation("gamma-shape", f"Gamma shapes need k, m >= 1 (got k={q.k}, m={q.m})"))
    elif isinstance(q, ExpMixture):
        if len(q.rates) == 0 or len(q.rates) != len(q.weights):
            out.append(Violation("mixture-shape", "mixture rates and weights must be non-empty and equal length"))
        if any(r <= 0 for r in q.rates):
            out.append(Violation("mixture-rates", "mixture rates must be positive"))
        if any(w < 0 for w in q.weights) or abs(sum(q.weights) - 1.0) > 1e-12:
            out.append(Violation("mixture-weights", "mixture weights must be a probability vector"))
    elif isinstance(q, MG1):
        if not (q.var_s >= 0 and math.isfinite(q.var_s)):
            out.append(Violation("variance", "Var(S) must be finite and >= 0"))
    elif isinstance(q, GIGIkApprox):
        if int(q.servers) != q.servers or q.servers < 1:
            out.append(Violation("servers", "number of servers must be an integer >= 1"))
        for name in ("var_t", "var_s"):
            v = getattr(q, name)
            if not (v >= 0 and math.isfinite(v)):
                out.append(Violation("variance", f"{name} must be finite and >= 0"))
    elif not isinstance(q, MM1):
        out.append(Violation("family", f"unknown queue family {q!r}"))
    return out


def validate(inst: ProblemInstance) -> ValidationReport:
    """Collect every violated modelling condition; never raises."""
    out = _family_violations(inst.queue)
    b = inst.box
    if not (0 < b.lambda_lo <= b.lambda_hi):
        out.append(Violation("box-lambda", "need 0 < lambda_lo <= lambda_hi"))
    if not (0 < b.mu_lo <= b.mu_hi):
        out.append(Violation("box-mu", "need 0 < mu_lo <= mu_hi"))
    q = inst.queue
    if isinstance(q, GammaGamma):
        if not b.lambda_hi / b.mu_lo < q.k / q.m:
            out.append(Violation(
                "gamma-stability",
                f"lambda_hi / mu_lo = {b.lambda_hi / b.mu_lo:g} must be < k/m = {q.k / q.m:g}"))
    elif not b.lambda_hi < b.mu_lo:
        out.append(Violation(
            "uniform-stability",
            f"lambda_hi = {b.lambda_hi:g} must be < mu_lo = {b.mu_lo:g}"))
    rev = inst.econ.revenue
    if isinstance(rev, Logit) and not (b.lambda_hi < 1.0 and b.lambda_lo > 0.0):
        out.append(Violation("logit-domain", "logit revenue needs 0 < lambda_lo and lambda_hi < 1"))
    elif isinstance(rev, Linear) and not (rev.a > 0 and rev.b > 0):
        out.append(Violation("revenue-params", "linear demand needs a, b > 0"))
    elif isinstance(rev, PowerPrice) and not (1.0 < rev.gamma <= 2.0):
        out.append(Violation("revenue-params", "power-price demand needs gamma in (1, 2]"))
    cst = inst.econ.cost
    if isinstance(cst, PowerCost) and not (cst.alpha >= 0 and cst.gamma >= 1):
        out.append(Violation("cost-params", "power cost needs alpha >= 0 and gamma >= 1"))
    if inst.econ.alpha_r < 0:
        out.append(Violation("strong-concavity", "alpha_r must be >= 0"))
    elif inst.econ.alpha_r > 0 and not any(v.code in ("logit-domain", "box-lambda") for v in out):
        modulus = concavity_modulus(rev, b.lambda_lo, b.lambda_hi)
        if inst.econ.alpha_r > 1.01 * modulus:
            out.append(Violation(
                "strong-concavity",
                f"alpha_r = {inst.econ.alpha_r:g} exceeds the numerical modulus {modulus:g} by more than 1%"))
    return ValidationReport(tuple(out))


# ---------------------------------------------------------------------------
# curvature conditions behind the two reformulations


@dataclass(frozen=True)
class AssumptionCheck:
    ok: bool
    revenue_ok: bool
    cost_ok: bool
    revenue_worst: float
    revenue_witness: float
    cost_worst: float
    cost_witness: float


def _second_differences(f, lo, hi, grid_n):
    """Raw second differences f(x-h) - 2 f(x) + f(x+h) at grid_n points, h = range/1000."""
    h = (hi - lo) / GRID_STEPS
    if h == 0.0:
        return np.array([lo]), np.zeros(1)
    x = np.linspace(lo + h, hi - h, grid_n)
    return x, f(x - h) - 2.0 * f(x) + f(x + h)


def _concave_part(f, lo, hi, grid_n):
    x, d = _second_differences(f, lo, hi, grid_n)
    i = int(np.argmax(d))
    return bool(d[i] <= CONVEXITY_TOL), float(d[i]), float(x[i])


def _convex_part(f, lo, hi, grid_n):
    x, d = _second_differences(f, lo, hi, grid_n)
    i = int(np.argmin(d))
    return bool(d[i] >= -CONVEXITY_TOL), float(d[i]), float(x[i])


def check_r1_conditions(econ: EconomicSpec, box: RateBox, grid_n: int = 201) -> AssumptionCheck:
    """Is r(x^2) concave on [sqrt(lambda_lo), sqrt(lambda_hi)] and c convex on [mu_lo, mu_hi]?

    Witnesses are the worst grid points (in lambda-hat and mu coordinates).
    """
    if grid_n < 3:
        raise ValueError("grid_n must be >= 3")
    rhat = lambda x: econ.revenue.value(x * x)
    r_ok, r_worst, r_at = _concave_part(rhat, math.sqrt(box.lambda_lo), math.sqrt(box.lambda_hi), grid_n)
    c_ok, c_worst, c_at = _convex_part(econ.cost.value, box.mu_lo, box.mu_hi, grid_n)
    return AssumptionCheck(r_ok and c_ok, r_ok, c_ok, r_worst, r_at, c_worst, c_at)


def check_r2_conditions(econ: EconomicSpec, box: RateBox, grid_n: int = 201) -> AssumptionCheck:
    """Is c(sqrt(y)) convex on [mu_lo^2, mu_hi^2] and r concave on [lambda_lo, lambda_hi]?

    For a power cost the exact test ``mu c''(mu) - c'(mu) >= 0`` is used; the
    witness is then the worst mu grid point, reported in mu-hat coordinates.
    """
    if grid_n < 3:
        raise ValueError("grid_n must be >= 3")
    r_ok, r_worst, r_at = _concave_part(econ.revenue.value, box.lambda_lo, box.lambda_hi, grid_n)
    if isinstance(econ.cost, PowerCost):
        mu = np.linspace(box.mu_lo, box.mu_hi, grid_n)
        g = mu * econ.cost.hess(mu) - econ.cost.grad(mu)
        i = int(np.argmin(g))
        c_ok, c_worst, c_at = bool(g[i] >= -CONVEXITY_TOL), float(g[i]), float(mu[i] ** 2)
    else:
        chat = lambda y: econ.cost.value(np.sqrt(y))
        c_ok, c_worst, c_at = _convex_part(chat, box.mu_lo ** 2, box.mu_hi ** 2, grid_n)
    return AssumptionCheck(r_ok and c_ok, r_ok, c_ok, r_worst, r_at, c_worst, c_at)


def sqrt_revenue_concave_region(rev, lo: float, hi: float, grid_n: int = 2001):
    """Sub-intervals of [lo, hi] (in lambda-hat) where r(x^2) is numerically concave."""
    x = np.linspace(lo, hi, grid_n)
    h = x[1] - x[0]
    f = np.asarray(rev.value(x * x), dtype=float)
    d2 = (f[:-2] - 2.0 * f[1:-1] + f[2:]) / (h * h)
    concave = d2 <= CONVEXITY_TOL
    xs = x[1:-1]
    regions = []
    start = None
    for i, c in enumerate(concave):
        if c and start is None:
            start = i
        if not c and start is not None:
            regions.append((float(xs[start]), float(xs[i - 1])))
            start = None
    if start is not None:
        regions.append((float(xs[start]), float(xs[-1])))
    return regions


# ---------------------------------------------------------------------------
# dict (JSON) round-trips


def family_from_dict(d: dict) -> QueueFamily:
    kind = d["type"]
    if kind == "MM1":
        return MM1()
    if kind == "GammaGamma":
        return GammaGamma(float(d["k"]), float(d["m"]))
    if kind == "MG1":
        return MG1(float(d["var_s"]))
    if kind == "GIGIkApprox":
        return GIGIkApprox(int(d["servers"]), float(d["var_t"]), float(d["var_s"]))
    if kind == "ExpMixture":
        return ExpMixture(tuple(d["rates"]), tuple(d["weights"]))
    raise ValueError(f"unknown queue type {kind!r}")


def family_to_dict(q: QueueFamily) -> dict:
    if isinstance(q, MM1):
        return {"type": "MM1"}
    if isinstance(q, GammaGamma):
        return {"type": "GammaGamma", "k": q.k, "m": q.m}
    if isinstance(q, MG1):
        return {"type": "MG1", "var_s": q.var_s}
    if isinstance(q, GIGIkApprox):
        return {"type": "GIGIkApprox", "servers": q.servers, "var_t": q.var_t, "var_s": q.var_s}
    if isinstance(q, ExpMixture):
        return {"type": "ExpMixture", "rates": list(q.rates), "weights": list(q.weights)}
    raise TypeError(f"cannot serialise {q!r}")


def box_from_dict(d: dict) -> RateBox:
    return RateBox(float(d["lambda_lo"]), float(d["lambda_hi"]), float(d["mu_lo"]), float(d["mu_hi"]))


def box_to_dict(b: RateBox) -> dict:
    return {"lambda_lo": b.lambda_lo, "lambda_hi": b.lambda_hi, "mu_lo": b.mu_lo, "mu_hi": b.mu_hi}


def econ_from_dict(d: dict) -> EconomicSpec:
    r = d["revenue"]
    kind = r["type"]
    if kind == "Linear":
        rev = Linear(float(r["a"]), float(r["b"]))
    elif kind == "Logit":
        rev = Logit(float(r["a"]))
    elif kind == "PowerPrice":
        rev = PowerPrice(float(r["gamma"]))
    else:
        raise ValueError(f"unknown revenue type {kind!r}")
    c = d["cost"]
    if c["type"] != "Power":
        raise ValueError(f"unknown cost type {c['type']!r}")
    return EconomicSpec(rev, PowerCost(float(c["alpha"]), float(c["gamma"])), float(d.get("alpha_r", 0.0)))


def econ_to_dict(e: EconomicSpec) -> dict:
    r = e.revenue
    if isinstance(r, Linear):
        rd = {"type": "Linear", "a": r.a, "b": r.b}
    elif isinstance(r, Logit):
        rd = {"type": "Logit", "a": r.a}
    elif isinstance(r, PowerPrice):
        rd = {"type": "PowerPrice", "gamma": r.gamma}
    else:
        raise TypeError("custom revenue functions cannot be serialised")
    if not isinstance(e.cost, PowerCost):
        raise TypeError("custom cost functions cannot be serialised")
    return {"revenue": rd, "cost": {"type": "Power", "alpha": e.cost.alpha, "gamma": e.cost.gamma},
            "alpha_r": e.alpha_r}


def instance_from_dict(d: dict) -> ProblemInstance:
    return ProblemInstance(family_from_dict(d["queue"]), box_from_dict(d["box"]), econ_from_dict(d["econ"]))


def instance_to_dict(inst: ProblemInstance) -> dict:
    return {"queue": family_to_dict(inst.queue), "box": box_to_dict(inst.box),
            "econ": econ_to_dict(inst.econ)}


def to_unit_mean_box(box: RateBox, family: QueueFamily) -> RateBox:
    """Map a box of unit-mean rates (T ~ Gamma(k, k)) to the Gamma(k, 1) convention."""
    if not isinstance(family, GammaGamma):
        return box
    k, m = family.k, family.m
    return RateBox(box.lambda_lo * k, box.lambda_hi * k, box.mu_lo * m, box.mu_hi * m)
