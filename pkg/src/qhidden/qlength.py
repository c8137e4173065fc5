"""Steady-state queue length L_q(rho) and its square-root version Lhat(tau) = L_q(sqrt(tau)).

Three evaluators:

* closed forms for M/M/1, M/G/1 (Pollaczek-Khinchine) and the GI/GI/k
  approximation;
* the Beta-series representation for Gamma(k,1)/Gamma(m,1) queues, where the
  n-th Spitzer term reduces to a one-dimensional Beta(mn, kn) tail integral
  that has an exact incomplete-beta form;
* a Monte Carlo estimate of the Spitzer series for any family with samplers.

All evaluators return a :class:`QLengthEval` carrying value and first two
derivatives in the evaluator's own variable (rho for ``lq*``, tau for
``lhat*``).
"""

from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from .model import MM1, MG1, GammaGamma, GIGIkApprox, QueueFamily
from .simulate import InstabilityError, sample_interarrival, sample_service, substream, thread_count
from .specialfn import _bd0, _inc_beta_pair, integrate_adaptive, log_beta_kernel

__all__ = [
    "SeriesConfig", "QLengthEval", "Method", "UnsupportedFamilyError",
    "SeriesTruncationError", "InstabilityError", "InstabilityWarning",
    "lq_closed", "lhat_closed", "lhat_beta_series", "lhat_spitzer_mc", "lhat", "lq",
    "spitzer_terms_gamma", "beta_series_sums", "ratio_bound", "BOUNDARY_MARGIN",
]

BOUNDARY_MARGIN = 1e-6
_EPS = float(np.finfo(float).eps)


class Method(str, enum.Enum):
    CLOSED_FORM = "ClosedForm"
    BETA_SERIES = "BetaSeries"
    MONTE_CARLO = "MonteCarlo"


class UnsupportedFamilyError(TypeError):
    pass


class SeriesTruncationError(RuntimeError):
    def __init__(self, message, achieved_bound=None):
        super().__init__(message)
        self.achieved_bound = achieved_bound


class InstabilityWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SeriesConfig:
    """Truncation and sampling policy for the Spitzer-type series.

    ``direct_terms`` caps the number of Beta-series terms summed one by one;
    if the geometric tail test has not passed by then, the remainder is summed
    with an Euler-Maclaurin integral over real n. ``direct_terms=0`` disables
    that and falls back to pure truncation at ``n_max``. ``mc_terms`` is the
    number of Spitzer terms each Monte Carlo replication sums.
    """

    n_max: int = 100_000
    tail_tol: float = 1e-9
    mc_samples: int = 200_000
    seed: int = 42
    direct_terms: int = 256
    mc_terms: int = 200

    def __post_init__(self):
        if not 1 <= self.n_max <= 1_000_000:
            raise ValueError("n_max must lie in [1, 1e6]")
        if not 0 < self.tail_tol <= 1e-2:
            raise ValueError("tail_tol must lie in (0, 1e-2]")
        if self.mc_samples < 1 or self.mc_terms < 1 or self.direct_terms < 0:
            raise ValueError("sample and term counts must be positive")


@dataclass(frozen=True)
class QLengthEval:
    value: float
    d1: float
    d2: float
    terms_used: int
    tail_bound: float
    method: Method
    std_error: Optional[float] = None
    tail_ratio: Optional[float] = None


# ---------------------------------------------------------------------------
# closed forms


def _closed_params(family):
    if isinstance(family, MM1):
        return 1.0, 2.0
    if isinstance(family, MG1):
        return (1.0 + family.var_s) / 2.0, 2.0
    if isinstance(family, GIGIkApprox):
        return (family.var_t + family.var_s) / 2.0, math.sqrt(2.0 * (family.servers + 1))
    raise UnsupportedFamilyError(f"no closed form for {type(family).__name__}; use the series or Monte Carlo evaluators")


def _closed_rho(coef, p, rho):
    q = 1.0 - rho
    rp = rho ** p
    v = coef * rp / q
    d1 = coef * (p * rho ** (p - 1) / q + rp / q ** 2)
    d2 = coef * (p * (p - 1) * rho ** (p - 2) / q + 2 * p * rho ** (p - 1) / q ** 2 + 2 * rp / q ** 3)
    return v, d1, d2


def lq_closed(family: QueueFamily, rho: float) -> QLengthEval:
    """coef * rho^p / (1 - rho) with derivatives in rho."""
    coef, p = _closed_params(family)
    if not 0.0 < rho < 1.0:
        raise InstabilityError(f"rho = {rho:g} outside (0, 1)")
    v, d1, d2 = _closed_rho(coef, p, rho)
    return QLengthEval(v, d1, d2, 0, 0.0, Method.CLOSED_FORM)


def lhat_closed(family: QueueFamily, tau: float) -> QLengthEval:
    """Lhat(tau) = L_q(sqrt(tau)) with derivatives in tau."""
    coef, p = _closed_params(family)
    if not 0.0 < tau < 1.0:
        raise InstabilityError(f"tau = {tau:g} outside (0, 1)")
    rho = math.sqrt(tau)
    v, l1, l2 = _closed_rho(coef, p, rho)
    return QLengthEval(v, l1 / (2 * rho), l2 / (4 * tau) - l1 / (4 * tau * rho), 0, 0.0, Method.CLOSED_FORM)


# ---------------------------------------------------------------------------
# Gamma/Gamma Beta series


def ratio_bound(k: float, m: float, a: float) -> float:
    """(k+m)^(k+m) / (k^k m^m) a^m (1-a)^k, the geometric decay rate of the n-th term."""
    return math.exp(-_neg_log_ratio(k, m, a))


def _neg_log_ratio(k, m, a):
    s = k + m
    return float(_bd0(m, s * a) + _bd0(k, s * (1.0 - a)))


def _term_rows(k, m, a, n):
    """Per-n pieces at threshold a for real n >= 1.

    Rows: value term, integral of v p_n over [a, 1], and a^2 (1-a) p_n(a)
    minus that integral. The value term already carries the (k+m) factor.
    """
    n = np.asarray(n, dtype=float)
    front = np.exp(np.asarray(log_beta_kernel(m * n, k * n, a)))  # a(1-a) p_n(a)
    upper = _inc_beta_pair(k * n, m * n, np.full_like(n, 1.0 - a), 200_000)[0]  # int_a^1 p_n
    jv = (m / (k + m)) * (upper + front / (m * n))
    val = (m / a - (k + m)) * upper + front / (a * n)
    dterm = a * front - jv
    return np.vstack([val, jv, dterm])


def _geometric_tail(rows, r):
    """Remainder bound last * q / (1 - q) with q the larger of r and the last observed ratio.

    The term ratios decrease toward r (from above for the p_n(a) row), so the
    last observed ratio bounds every later one.
    """
    last = np.abs(rows[:, -1])
    q = np.full(rows.shape[0], r)
    if rows.shape[1] >= 2:
        prev = np.abs(rows[:, -2])
        with np.errstate(divide="ignore", invalid="ignore"):
            obs = np.where(prev > 0, last / prev, 0.0)
        q = np.maximum(q, obs)
    with np.errstate(divide="ignore"):
        return np.where(q < 1.0, last * q / (1.0 - q), np.inf)


def _direct_ok(sums, abs_sums, tail, tail_tol):
    scale = np.array([abs(sums[0]), abs(sums[1]), abs_sums[2]])
    return bool(np.all(tail <= tail_tol * scale))


@dataclass(frozen=True)
class _Sums:
    value: float
    jv: float
    dsum: float
    terms: int
    tail_value: float
    tail_jv: float
    tail_d: float


def _em_tail(k, m, a, start, neg_log_r, tail_tol, scale):
    """Euler-Maclaurin sum of terms n >= start, treating n as continuous.

    ``scale`` holds one magnitude per row; the quadrature budget is a small
    fraction of ``tail_tol * scale``.
    """
    g = lambda x: _term_rows(k, m, a, x)
    x_end = max(2.0 * start, 60.0 / neg_log_r)
    n_edges = int(math.ceil(math.log2(x_end / start))) + 1
    edges = start * 2.0 ** np.arange(n_edges + 1)
    # rounding of a alone perturbs the n-th term by about sqrt(n) ulps
    noise = lambda lo, hi: 4.0 * _EPS * np.sqrt(hi)
    integral, err = integrate_adaptive(g, edges, tol=0.05 * tail_tol * scale, rel_tol=0.05 * tail_tol,
                                       per_row=True, noise=noise)
    pts = g(np.arange(start - 2, start + 3, dtype=float))
    gm2, gm1, g0, gp1, gp2 = pts.T
    third = (gp2 - 2 * gp1 + 2 * gm1 - gm2) / 2.0
    first = (gp1 - gm1) / 2.0 - third / 6.0
    tail = integral + g0 / 2.0 - first / 12.0 + third / 720.0
    bound = err + np.abs(third) / 720.0
    return tail, bound


def beta_series_sums(k: float, m: float, a: float, cfg: SeriesConfig) -> _Sums:
    """Sum the Beta-series pieces over n >= 1 at threshold a in (m/(k+m), 1)."""
    r = ratio_bound(k, m, a)
    neg_log_r = _neg_log_ratio(k, m, a)
    cap = cfg.n_max if cfg.direct_terms == 0 else min(cfg.n_max, cfg.direct_terms)
    block = min(64, cap)
    rows = _term_rows(k, m, a, np.arange(1, block + 1))
    while True:
        sums = rows.sum(axis=1)
        abs_sums = np.abs(rows).sum(axis=1)
        tail = _geometric_tail(rows, r)
        n_done = rows.shape[1]
        if n_done >= 2 and _direct_ok(sums, abs_sums, tail, cfg.tail_tol):
            return _Sums(sums[0], sums[1], sums[2], n_done, tail[0], tail[1], tail[2])
        if n_done >= cap:
            break
        nxt = min(cap, 2 * n_done)
        rows = np.hstack([rows, _term_rows(k, m, a, np.arange(n_done + 1, nxt + 1))])
    if cfg.direct_terms == 0:
        raise SeriesTruncationError(
            f"geometric tail bound {tail[0]:.3g} not below tail_tol * value after n_max={cap} terms",
            achieved_bound=float(tail[0]))
    tail_sums, bound = _em_tail(k, m, a, n_done + 1, neg_log_r, cfg.tail_tol, abs_sums)
    sums = sums + tail_sums
    return _Sums(sums[0], sums[1], sums[2], n_done, bound[0], bound[1], bound[2])


def _check_gamma(k, m):
    if not (k >= 1 and m >= 1):
        raise ValueError("Gamma shapes must satisfy k, m >= 1")


@lru_cache(maxsize=8192)
def _beta_series_cached(k, m, tau, cfg):
    s = math.sqrt(tau)
    a = 1.0 / (1.0 + s)
    sums = beta_series_sums(k, m, a, cfg)
    value = sums.value
    d1 = (k + m) / (2.0 * s) * sums.jv
    d2 = (k + m) / (4.0 * s ** 3) * sums.dsum
    if sums.tail_value > cfg.tail_tol * abs(value):
        raise SeriesTruncationError(
            f"tail bound {sums.tail_value:.3g} exceeds tail_tol * value at tau={tau:g}",
            achieved_bound=sums.tail_value)
    return QLengthEval(value, d1, d2, sums.terms, sums.tail_value, Method.BETA_SERIES)


def lhat_beta_series(k: float, m: float, tau: float, cfg: SeriesConfig = SeriesConfig()) -> QLengthEval:
    """Lhat(tau) for Gamma(k,1)/Gamma(m,1) via the Beta series, with exact d1 and d2.

    ``tail_bound`` is an absolute bound on the neglected part of the value
    series: the geometric bound when direct summation suffices, otherwise the
    Euler-Maclaurin error estimate.
    """
    _check_gamma(k, m)
    limit = (k / m) ** 2
    if not 0.0 < tau <= (1.0 - BOUNDARY_MARGIN) * limit:
        raise InstabilityError(
            f"tau = {tau:g} outside (0, (1 - {BOUNDARY_MARGIN:g}) k^2/m^2 = {(1 - BOUNDARY_MARGIN) * limit:g}]")
    return _beta_series_cached(float(k), float(m), float(tau), cfg)


def spitzer_terms_gamma(k: float, m: float, n, tau: float):
    """Individual Spitzer terms lhat_n(tau) and their first two tau-derivatives.

    Returns three arrays aligned with ``n``.
    """
    _check_gamma(k, m)
    s = math.sqrt(tau)
    a = 1.0 / (1.0 + s)
    rows = _term_rows(k, m, a, np.atleast_1d(np.asarray(n, dtype=float)))
    return rows[0], (k + m) / (2.0 * s) * rows[1], (k + m) / (4.0 * s ** 3) * rows[2]


# ---------------------------------------------------------------------------
# Monte Carlo


_MC_BLOCK = 2048


def _mc_block(family, s, cfg, block, size):
    rng = substream(cfg.seed, 0x5EED, block)
    horizon = cfg.mc_terms
    x = np.cumsum(sample_service(family, rng, (size, horizon)), axis=1)
    y = np.cumsum(sample_interarrival(family, rng, (size, horizon)), axis=1)
    inc = s * x - y
    inv_n = 1.0 / np.arange(1, horizon + 1)
    pos = inc > 0
    z = (np.where(pos, inc, 0.0) * inv_n).sum(axis=1)
    zd = (np.where(pos, x, 0.0) * inv_n).sum(axis=1)
    term_sums = (np.where(pos, inc, 0.0) * inv_n).sum(axis=0)
    return z.sum(), (z * z).sum(), zd.sum(), term_sums


def lhat_spitzer_mc(family: QueueFamily, tau: float, cfg: SeriesConfig = SeriesConfig()) -> QLengthEval:
    """Monte Carlo estimate of sum_{n <= mc_terms} (1/n) E[(sqrt(tau) X_n - Y_n)^+].

    Each replication draws one stream of (S_i, T_i) and uses prefix sums for
    every n. ``d1`` is the pathwise derivative; ``d2`` is not available (nan).
    Results depend only on (family, tau, cfg), not on QHIDDEN_THREADS.
    """
    bound = family.stability_bound
    if not 0.0 <= tau < bound * bound:
        raise InstabilityError(f"tau = {tau:g} outside [0, {bound * bound:g})")
    s = math.sqrt(tau)
    total = cfg.mc_samples
    sizes = [min(_MC_BLOCK, total - i) for i in range(0, total, _MC_BLOCK)]
    work = lambda b: _mc_block(family, s, cfg, b, sizes[b])
    workers = min(thread_count(), len(sizes))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(work, range(len(sizes))))
    else:
        parts = [work(b) for b in range(len(sizes))]
    z = sum(p[0] for p in parts)
    z2 = sum(p[1] for p in parts)
    zd = sum(p[2] for p in parts)
    terms = sum(p[3] for p in parts) / total
    mean = z / total
    var = max(z2 / total - mean * mean, 0.0) * total / max(total - 1, 1)
    d1 = zd / total / (2.0 * s) if s > 0 else float("nan")

    tail_ratio = float("nan")
    tail_bound = 0.0
    last = terms[-10:]
    if np.all(last > 0) and last.size >= 2:
        slope = np.polyfit(np.arange(last.size), np.log(last), 1)[0]
        tail_ratio = float(math.exp(slope))
        if tail_ratio >= 1.0:
            warnings.warn(f"Spitzer terms are not decaying (fitted ratio {tail_ratio:.4f})", InstabilityWarning)
            tail_bound = float("inf")
        else:
            tail_bound = float(last[-1] * tail_ratio / (1.0 - tail_ratio))
    return QLengthEval(mean, d1, float("nan"), cfg.mc_terms, tail_bound, Method.MONTE_CARLO,
                       std_error=math.sqrt(var / total), tail_ratio=tail_ratio)


# ---------------------------------------------------------------------------
# dispatch


def lhat(family: QueueFamily, tau: float, cfg: SeriesConfig = SeriesConfig()) -> QLengthEval:
    """Lhat(tau) by the best available evaluator for the family."""
    if isinstance(family, (MM1, MG1, GIGIkApprox)):
        return lhat_closed(family, tau)
    if isinstance(family, GammaGamma):
        return lhat_beta_series(family.k, family.m, tau, cfg)
    return lhat_spitzer_mc(family, tau, cfg)


def lq(family: QueueFamily, rho: float, cfg: SeriesConfig = SeriesConfig()) -> QLengthEval:
    """L_q(rho) with rho-derivatives, obtained from Lhat at tau = rho^2 where needed."""
    if isinstance(family, (MM1, MG1, GIGIkApprox)):
        return lq_closed(family, rho)
    if not rho > 0:
        raise InstabilityError("rho must be > 0")
    e = lhat(family, rho * rho, cfg)
    d1 = 2.0 * rho * e.d1
    d2 = 4.0 * rho * rho * e.d2 + 2.0 * e.d1
    return replace(e, d1=d1, d2=d2)
