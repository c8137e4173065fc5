"""Numerical certificates for the optimization landscape.

Convexity of Lhat on the stable range, monotonicity of the normalising
sequence s_{k,m,n}, the sign of F and D behind the Gamma convexity argument,
the exponential-mixture counterexample, term-level non-convexity of single
Spitzer terms, and the gradient-dominance (PLK) audit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import ExpMixture, GammaGamma, ProblemInstance, QueueFamily
from .qlength import (SeriesConfig, UnsupportedFamilyError, beta_series_sums, lhat_beta_series,
                      lhat_closed, lhat_spitzer_mc, spitzer_terms_gamma)
from .reform import objective, plk_constant
from .solve import grid_oracle, reduced_gradient
from .specialfn import ln_gamma

__all__ = [
    "Verdict", "ConvexityCertificate", "certify_lhat_convexity", "certify_family_convexity",
    "endpoint_grid", "s_series", "check_s_monotone", "f_function", "check_F_nonneg", "eval_D",
    "check_D_nonneg", "CounterexampleReport", "counterexample", "counterexample_mc",
    "mixture_l1_prime", "TermConvexityReport", "term_convexity", "PlkAuditReport", "plk_audit",
]

CONVEXITY_TOL = 1e-8
FD_CHECKS = 10


class Verdict(str, enum.Enum):
    CONVEX = "ConvexWithinTol"
    VIOLATION = "ViolationFound"


def endpoint_grid(lo: float, hi: float, n: int, eps: float) -> np.ndarray:
    """n points in [lo + eps, hi - eps], geometrically clustered at both ends."""
    if n < 3:
        raise ValueError("need at least 3 grid points")
    mid = 0.5 * (lo + hi)
    n_left = (n + 1) // 2
    left = lo + np.geomspace(eps, mid - lo, n_left)
    right = hi - np.geomspace(eps, hi - mid, n - n_left + 1)[::-1]
    return np.concatenate([left, right[1:]])


# ---------------------------------------------------------------------------
# convexity of Lhat


@dataclass
class ConvexityCertificate:
    family: dict
    grid: np.ndarray
    second_derivative: np.ndarray
    min_second_diff: float
    verdict: Verdict
    witness: Optional[float]
    fd_points: np.ndarray = field(default_factory=lambda: np.empty(0))
    fd_rel_err: np.ndarray = field(default_factory=lambda: np.empty(0))
    tolerance: float = CONVEXITY_TOL

    @property
    def fd_max_rel_err(self) -> float:
        return float(np.max(self.fd_rel_err)) if self.fd_rel_err.size else 0.0


def _fd_second(value, tau, h):
    """Richardson-extrapolated central second difference."""
    def d(step):
        return (value(tau + step) - 2.0 * value(tau) + value(tau - step)) / (step * step)
    return (4.0 * d(0.5 * h) - d(h)) / 3.0


def _certify(descriptor, value_fn, d2_fn, limit, grid_n, seed, tol):
    if grid_n < 11:
        raise ValueError("grid_n must be >= 11")
    eps = 1e-3 * limit
    grid = endpoint_grid(0.0, limit, grid_n, eps)
    d2 = np.array([d2_fn(t) for t in grid])
    bad = d2 < -tol * (1.0 + np.abs(d2))
    i_min = int(np.argmin(d2))
    verdict = Verdict.VIOLATION if bad.any() else Verdict.CONVEX
    witness = float(grid[np.argmax(bad)]) if bad.any() else None
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(np.arange(1, grid.size - 1), size=min(FD_CHECKS, grid.size - 2), replace=False))
    fd_pts = grid[picks]
    rel = []
    for t, a in zip(fd_pts, d2[picks]):
        h = 1e-2 * min(t, limit - t)
        fd = _fd_second(value_fn, t, h)
        rel.append(abs(fd - a) / max(abs(a), 1e-300))
    return ConvexityCertificate(descriptor, grid, d2, float(d2[i_min]), verdict, witness,
                                fd_pts, np.array(rel), tol)


def certify_lhat_convexity(k: float, m: float, grid_n: int = 201, cfg: SeriesConfig = SeriesConfig(),
                           seed: int = 0, tol: float = CONVEXITY_TOL) -> ConvexityCertificate:
    """Check Lhat'' >= 0 on (eps, k^2/m^2 - eps) for the Gamma(k,1)/Gamma(m,1) queue.

    Uses the analytic second derivative of the Beta series; ``FD_CHECKS``
    random grid points are cross-checked against finite differences of values.
    """
    if not (k >= 1 and m >= 1):
        raise ValueError("need k, m >= 1")
    return _certify({"type": "GammaGamma", "k": k, "m": m},
                    lambda t: lhat_beta_series(k, m, t, cfg).value,
                    lambda t: lhat_beta_series(k, m, t, cfg).d2,
                    (k / m) ** 2, grid_n, seed, tol)


def certify_family_convexity(family: QueueFamily, grid_n: int = 201, cfg: SeriesConfig = SeriesConfig(),
                             seed: int = 0, tol: float = CONVEXITY_TOL) -> ConvexityCertificate:
    """Same certificate for any family with an analytic second derivative."""
    from .model import family_to_dict
    if isinstance(family, GammaGamma):
        return certify_lhat_convexity(family.k, family.m, grid_n, cfg, seed, tol)
    if isinstance(family, ExpMixture):
        raise UnsupportedFamilyError("mixture families have no analytic second derivative")
    return _certify(family_to_dict(family),
                    lambda t: lhat_closed(family, t).value,
                    lambda t: lhat_closed(family, t).d2,
                    family.stability_bound ** 2, grid_n, seed, tol)


# ---------------------------------------------------------------------------
# s_{k,m,n}, F and D


def _log_s(k, m, n):
    return (ln_gamma((k + m) * n) - ln_gamma(m * n) - ln_gamma(k * n)
            + n * (m * math.log(m) + k * math.log(k) - (k + m) * math.log(k + m)))


def s_series(k: float, m: float, n: int) -> float:
    """Gamma((k+m)n) / (Gamma(mn) Gamma(kn)) * (m^m k^k / (m+k)^(m+k))^n, via logs."""
    if not (k >= 1 and m >= 1 and n >= 1):
        raise ValueError("need k, m, n >= 1")
    log_s = _log_s(k, m, n)
    if log_s > 700.0:
        raise OverflowError(f"s_{{k,m,n}} overflows at n={n}")
    return math.exp(log_s)


def check_s_monotone(k: float, m: float, n_max: int = 50):
    """(strictly increasing on 1..n_max, first n with s_{n+1} <= s_n or None).

    The comparison is done on logs, so large n cannot overflow.
    """
    logs = [_log_s(k, m, n) for n in range(1, n_max + 1)]
    for n in range(1, n_max):
        if not logs[n] > logs[n - 1]:
            return False, n
    return True, None


def f_function(k: float, m: float, eta):
    """m ln(1 + 2 eta/m) + k ln(1 - eta/k) - (k+m) ln(1 + eta/(k+m)) - ln(1 - eta)."""
    eta = np.asarray(eta, dtype=float)
    return (m * np.log1p(2.0 * eta / m) + k * np.log1p(-eta / k)
            - (k + m) * np.log1p(eta / (k + m)) - np.log1p(-eta))


def check_F_nonneg(k: float, m: float, grid_n: int = 1001, tol: float = 1e-12):
    """(F >= -tol on an endpoint-clustered grid of (0, 1), minimum value found)."""
    eta = endpoint_grid(0.0, 1.0, grid_n, 1e-9)
    f = f_function(k, m, eta)
    lo = float(np.min(f))
    return bool(lo >= -tol), lo


@dataclass(frozen=True)
class DValue:
    value: float
    tail_bound: float
    terms: int


def eval_D(k: float, m: float, a: float, cfg: SeriesConfig = SeriesConfig()) -> DValue:
    """D_{k,m}(a) = sum_n [a^2 (1-a) p_n(a) - int_a^1 v p_n(v) dv] for a in (m/(m+k), 1)."""
    lo = m / (m + k)
    if not lo < a < 1.0:
        raise ValueError(f"a must lie in ({lo:g}, 1)")
    s = beta_series_sums(k, m, a, cfg)
    return DValue(float(s.dsum), float(s.tail_d), int(s.terms))


def check_D_nonneg(k: float, m: float, grid_n: int = 51, cfg: SeriesConfig = SeriesConfig()):
    """(D >= -tail_bound at every grid point, minimum D, a at the minimum)."""
    lo = m / (m + k)
    grid = endpoint_grid(lo, 1.0, grid_n, 1e-3 * (1.0 - lo))
    vals = [eval_D(k, m, a, cfg) for a in grid]
    ok = all(v.value >= -max(v.tail_bound, 1e-300) for v in vals)
    i = int(np.argmin([v.value for v in vals]))
    return ok, vals[i].value, float(grid[i])


# ---------------------------------------------------------------------------
# exponential-mixture counterexample


def mixture_l1_prime(rates, tau: float) -> float:
    """d/dtau of the first Spitzer term for equal-weight mixtures used as both S and T."""
    rates = np.asarray(rates, dtype=float)
    s = math.sqrt(tau)
    li, lj = rates[:, None], rates[None, :]
    w = 1.0 / rates.size
    return float((w * w / (2.0 * s)) * np.sum(1.0 / li - li / (li + lj * s) ** 2))


@dataclass
class CounterexampleReport:
    tau1: float
    tau2: float
    lower_bound_at_tau1: float
    upper_bound_at_tau2: float
    separation: bool
    l1_prime_tau2: float
    tilted_mean: float
    mgf_service: float
    mgf_interarrival: float
    geometric_ratio: float
    rounded_upper_bound: float
    thresholds: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)


_MIX_RATES = (0.1, 10.0)


def counterexample(tau1: float = 1e-6, tau2: float = 0.01, alpha: float = 0.2) -> CounterexampleReport:
    """Lhat' for the two-rate exponential mixture is larger at tau1 than at tau2 > tau1.

    The lower bound keeps only the first Spitzer term. The upper bound adds a
    Chernoff-type bound on every later term, each dominated by the ratio
    M_S(alpha sqrt(tau2)) M_T(-alpha) to the power n-1.
    """
    fam = ExpMixture(_MIX_RATES, (0.5, 0.5))
    lower = mixture_l1_prime(fam.rates, tau1)
    l1_t2 = mixture_l1_prime(fam.rates, tau2)
    t = alpha * math.sqrt(tau2)
    tilted = fam.tilted_mean(t)
    ms = fam.mgf(t)
    mt = fam.mgf(-alpha)
    q = ms * mt
    if not q < 1.0:
        raise ArithmeticError("the geometric bound does not converge for these parameters")
    upper = l1_t2 + tilted / (2.0 * math.sqrt(tau2)) * q / (1.0 - q)
    # the same chain with every factor rounded up
    rounded = 15.0 + 40.0 * 0.75 / (1.0 - 0.75)
    thresholds = {"lower": 219.0, "l1_prime_tau2": 15.0, "tilted_mean": 8.0,
                  "mgf_service": 1.13, "mgf_interarrival": 0.66, "upper": 135.0}
    checks = {
        "lower": lower > 219.0,
        "l1_prime_tau2": l1_t2 < 15.0,
        "tilted_mean": tilted < 8.0,
        "mgf_service": ms < 1.13,
        "mgf_interarrival": mt < 0.66,
        "upper": upper < 135.0,
    }
    return CounterexampleReport(tau1, tau2, lower, upper, lower > upper, l1_t2, tilted, ms, mt, q,
                                rounded, thresholds, checks)


def counterexample_mc(tau1: float = 1e-6, tau2: float = 0.01, cfg: SeriesConfig = SeriesConfig()):
    """Monte Carlo Lhat' at both points (a noisy diagnostic, not a proof)."""
    fam = ExpMixture(_MIX_RATES, (0.5, 0.5))
    return lhat_spitzer_mc(fam, tau1, cfg), lhat_spitzer_mc(fam, tau2, cfg)


# ---------------------------------------------------------------------------
# single Spitzer terms vs partial sums


@dataclass
class TermConvexityReport:
    tau: float
    first_term_second_difference: float
    n0: Optional[int]
    grid: np.ndarray
    min_partial_d2: np.ndarray  # min over the grid of (sum_{n<=N} lhat_n)'' for N = 1..n_max


def term_convexity(k: float = 1.0, m: float = 1.0, tau: float = 0.25, grid_n: int = 201,
                   n_max: int = 200, h: float = 1e-3, tol: float = CONVEXITY_TOL) -> TermConvexityReport:
    """Second difference of the first Spitzer term at tau, and the smallest N whose
    partial sum has a non-negative second derivative over the whole grid."""
    f = lambda t: float(spitzer_terms_gamma(k, m, [1], t)[0][0])
    first = (f(tau + h) - 2.0 * f(tau) + f(tau - h)) / (h * h)
    limit = (k / m) ** 2
    grid = endpoint_grid(0.0, limit, grid_n, 1e-3 * limit)
    ns = np.arange(1, n_max + 1)
    partial = np.empty((grid.size, n_max))
    for i, t in enumerate(grid):
        partial[i] = np.cumsum(spitzer_terms_gamma(k, m, ns, t)[2])
    ok = np.all(partial >= -tol * (1.0 + np.abs(partial)), axis=0)
    n0 = None
    for j in range(n_max):
        if ok[j:].all():
            n0 = int(ns[j])
            break
    return TermConvexityReport(tau, first, n0, grid, partial.min(axis=0))


# ---------------------------------------------------------------------------
# gradient-dominance audit


@dataclass
class PlkAuditReport:
    mu_plk: float
    f_star: float
    oracle_point: np.ndarray
    worst_slack: float
    worst_point: np.ndarray
    n_points: int
    n_violations: int
    passed: bool


def plk_audit(inst: ProblemInstance, cfg: SeriesConfig = SeriesConfig(), grid_n: int = 21,
              inflate: float = 1.0, oracle_resolution: int = 21, abs_tol: float = 1e-9) -> PlkAuditReport:
    """Check f(x) - f* <= |reduced gradient(x)|^2 / (2 mu_plk) on a grid of the original box.

    ``slack`` is right side minus left side; a point passes when
    slack >= -abs_tol (the oracle's f* is itself only accurate to about that).
    """
    q = inst.queue
    if not isinstance(q, GammaGamma):
        raise TypeError("the audit constant is available for Gamma(k,1)/Gamma(m,1) queues only")
    if not inst.box.lambda_hi / inst.box.mu_lo < q.k / q.m:
        raise ValueError("the box must lie strictly inside the stable region")
    mu_plk = plk_constant(inst) * inflate
    x_star, f_star = grid_oracle("original", inst, oracle_resolution, cfg)
    b = inst.box
    lo, hi = b.lower, b.upper
    worst, worst_x, n_bad = math.inf, None, 0
    for lam in np.linspace(b.lambda_lo, b.lambda_hi, grid_n):
        for mu in np.linspace(b.mu_lo, b.mu_hi, grid_n):
            x = np.array([lam, mu])
            e = objective("original", inst, x, cfg)
            rg = reduced_gradient(e.grad, x, lo, hi)
            slack = float(rg @ rg) / (2.0 * mu_plk) - (e.value - f_star)
            if slack < -abs_tol:
                n_bad += 1
            if slack < worst:
                worst, worst_x = slack, x
    return PlkAuditReport(mu_plk, f_star, x_star, worst, worst_x, grid_n * grid_n, n_bad, n_bad == 0)
