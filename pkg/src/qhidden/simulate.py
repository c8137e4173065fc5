"""Lindley-recursion simulation of single-server queues.

The waiting-time recursion ``W_{n+1} = (W_n + S_n/mu - T_n/lambda)^+`` started
from ``W_0 = 0`` is evaluated in closed form as ``P_n - min_{j<=n} P_j`` on the
random walk ``P``, so a whole replication is a handful of numpy passes.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .model import MM1, MG1, ExpMixture, GammaGamma, GIGIkApprox, QueueFamily

__all__ = [
    "SimConfig", "SimEstimate", "InstabilityError", "substream",
    "sample_interarrival", "sample_service", "simulate_wait", "thread_count",
]


class InstabilityError(ValueError):
    """Traffic intensity at or beyond the family's stability bound."""


def thread_count() -> int:
    """Worker cap from QHIDDEN_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("QHIDDEN_THREADS", "1")))
    except ValueError:
        return 1


def substream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for (seed, key...), independent of call order."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _moment_gamma(rng, var, size):
    # unit mean, variance var; var = 0 is deterministic
    if var == 0:
        return np.ones(size)
    return rng.gamma(1.0 / var, var, size)


def _mixture(rng, fam: ExpMixture, size):
    comp = rng.choice(len(fam.rates), size=size, p=np.asarray(fam.weights))
    scale = 1.0 / np.asarray(fam.rates)[comp]
    return rng.exponential(1.0, size) * scale


def sample_interarrival(family: QueueFamily, rng: np.random.Generator, size=None):
    """Draw base interarrival times T_n (before division by lambda)."""
    if isinstance(family, (MM1, MG1)):
        return rng.exponential(1.0, size)
    if isinstance(family, GammaGamma):
        return rng.standard_gamma(family.k, size)
    if isinstance(family, GIGIkApprox):
        return _moment_gamma(rng, family.var_t, size)
    if isinstance(family, ExpMixture):
        return _mixture(rng, family, size)
    raise TypeError(f"no sampler for {family!r}")


def sample_service(family: QueueFamily, rng: np.random.Generator, size=None):
    """Draw base service times S_n (before division by mu)."""
    if isinstance(family, MM1):
        return rng.exponential(1.0, size)
    if isinstance(family, GammaGamma):
        return rng.standard_gamma(family.m, size)
    if isinstance(family, MG1):
        return _moment_gamma(rng, family.var_s, size)
    if isinstance(family, GIGIkApprox):
        return _moment_gamma(rng, family.var_s, size)
    if isinstance(family, ExpMixture):
        return _mixture(rng, family, size)
    raise TypeError(f"no sampler for {family!r}")


@dataclass(frozen=True)
class SimConfig:
    horizon: int = 200_000
    replications: int = 32
    seed: int = 42
    warmup: Optional[int] = None  # None -> max(1000, horizon // 10)

    def __post_init__(self):
        if self.horizon < 1 or self.replications < 1:
            raise ValueError("horizon and replications must be >= 1")
        if self.warmup is not None and self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if self.horizon < 100 * (1 + (self.effective_warmup > 0)):
            raise ValueError("horizon too short for the warmup setting")

    @property
    def effective_warmup(self) -> int:
        return max(1000, self.horizon // 10) if self.warmup is None else self.warmup


@dataclass(frozen=True)
class SimEstimate:
    mean_wait: float
    mean_queue: float
    ci_halfwidth: float
    replications: int
    wait_halfwidth: float = 0.0


def _replication(family, lam, mu, cfg: SimConfig, index: int) -> float:
    rng = substream(cfg.seed, index)
    n = cfg.effective_warmup + cfg.horizon
    s = sample_service(family, rng, n)
    t = sample_interarrival(family, rng, n)
    walk = np.cumsum(s / mu - t / lam)
    # W_0 = 0, W_j = P_j - min(0, P_1..P_j); the first customer waits 0
    floor = np.minimum.accumulate(np.minimum(walk, 0.0))
    waits = walk - floor
    waits = np.concatenate([[0.0], waits[:-1]])
    return float(waits[cfg.effective_warmup:].mean())


def simulate_wait(family: QueueFamily, lam: float, mu: float, cfg: SimConfig = SimConfig()) -> SimEstimate:
    """Mean stationary wait and queue length with a Student-t 95% interval.

    ``mean_queue`` is ``lam * mean_wait`` with the controlled ``lam`` (so for
    Gamma(k, 1) arrivals it matches the L_q scaling used by the evaluators).
    """
    if isinstance(family, GIGIkApprox) and family.servers != 1:
        raise TypeError("multi-server queues are covered only by their approximation formula")
    rho = lam / mu
    if not (lam > 0 and mu > 0) or rho >= family.stability_bound:
        raise InstabilityError(f"rho = {rho:g} is not below the stability bound {family.stability_bound:g}")
    workers = min(thread_count(), cfg.replications)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            means = list(ex.map(lambda i: _replication(family, lam, mu, cfg, i), range(cfg.replications)))
    else:
        means = [_replication(family, lam, mu, cfg, i) for i in range(cfg.replications)]
    means = np.asarray(means)
    mean_wait = float(means.mean())
    if cfg.replications > 1:
        half = float(stats.t.ppf(0.975, cfg.replications - 1) * means.std(ddof=1) / math.sqrt(cfg.replications))
    else:
        half = float("inf")
    return SimEstimate(mean_wait=mean_wait, mean_queue=lam * mean_wait, ci_halfwidth=lam * half,
                       replications=cfg.replications, wait_halfwidth=half)
