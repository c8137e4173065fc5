"""Projected gradient descent, a brute-force grid oracle and Jackson-network optimization."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import MM1, EconomicSpec, ProblemInstance, RateBox
from .qlength import SeriesConfig, lhat_closed
from .reform import Parameterization, inverse_transform, objective, transformed_bounds
from .simulate import InstabilityError, substream, thread_count

__all__ = [
    "SolveConfig", "SolveReport", "RunSummary", "LineSearchError", "SingularNetworkError",
    "reduced_gradient", "project_box", "projected_gd", "grid_oracle", "JacksonInstance",
    "jackson_objective", "project_polytope", "solve_jackson", "jackson_grid_oracle",
]

_STEP_FLOOR = 1e-20


class LineSearchError(RuntimeError):
    """Backtracking shrank the step below the floor without sufficient decrease."""


class SingularNetworkError(ValueError):
    """(I - P^T) is singular or too ill-conditioned to invert reliably."""


@dataclass(frozen=True)
class SolveConfig:
    max_iters: int = 2000
    step_init: float = 1.0
    backtrack_beta: float = 0.5
    armijo_c: float = 1e-4
    grad_tol: float = 1e-6
    restarts: int = 16
    seed: int = 42
    oracle_grid: int = 0  # > 0: also run grid_oracle at this resolution and report the gap
    record_trajectory: Optional[bool] = None  # None: only for the non-convex original variant
    series: SeriesConfig = SeriesConfig()

    def __post_init__(self):
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be >= 1")
        if not self.step_init > 0 or not self.grad_tol > 0:
            raise ValueError("step_init and grad_tol must be positive")
        if not (0 < self.backtrack_beta < 1 and 0 < self.armijo_c < 1):
            raise ValueError("backtrack_beta and armijo_c must lie in (0, 1)")
        if self.oracle_grid and self.oracle_grid < 11:
            raise ValueError("oracle_grid must be 0 or >= 11")


@dataclass
class RunSummary:
    start: np.ndarray
    point: np.ndarray
    value: float
    reduced_grad_norm: float
    iters: int
    converged: bool
    status: str
    trajectory: Optional[list] = None


@dataclass
class SolveReport:
    best_point: np.ndarray  # original coordinates
    best_value: float
    reduced_grad_norm: float
    iters: int
    converged: bool
    param: str = "original"
    trajectory: Optional[list] = None
    oracle_gap: Optional[float] = None
    oracle_point: Optional[np.ndarray] = None
    runs: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)


def _at_bound(x, b):
    return np.abs(x - b) <= 1e-12 * np.maximum(1.0, np.abs(b))


def reduced_gradient(grad, point, lo, hi) -> np.ndarray:
    """Minimal-norm element of grad + N_box(point); zero exactly at KKT points."""
    g = np.asarray(grad, dtype=float).copy()
    x = np.asarray(point, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), x.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), x.shape)
    g[_at_bound(x, lo) & (g > 0)] = 0.0
    g[_at_bound(x, hi) & (g < 0)] = 0.0
    return g


def project_box(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


def _descend(f, x, lo, hi, cfg: SolveConfig, record: bool, project=None, stat=None):
    """One projected-gradient run with Armijo backtracking.

    ``f`` returns (value, grad); ``stat(x, g)`` is the stationarity residual.
    """
    project = project or (lambda z: project_box(z, lo, hi))
    stat = stat or (lambda z, g: float(np.linalg.norm(reduced_gradient(g, z, lo, hi))))
    x = project(np.asarray(x, dtype=float))
    fx, gx = f(x)
    traj = [(x.copy(), fx)] if record else None
    eta = cfg.step_init
    status = "max-iters"
    it = 0
    res = stat(x, gx)
    for it in range(1, cfg.max_iters + 1):
        if res <= cfg.grad_tol:
            status = "converged"
            it -= 1
            break
        eta = min(cfg.step_init, eta / cfg.backtrack_beta)
        while True:
            x_new = project(x - eta * gx)
            step = x_new - x
            if not np.any(step):
                # projection returns the same point: no further progress possible
                status = "stalled"
                break
            try:
                f_new, g_new = f(x_new)
            except (InstabilityError, ValueError, FloatingPointError):
                f_new = math.inf
            if f_new <= fx + cfg.armijo_c * float(gx @ step):
                break
            eta *= cfg.backtrack_beta
            if eta < _STEP_FLOOR:
                status = "line-search-failure"
                break
        if status in ("stalled", "line-search-failure"):
            break
        x, fx, gx = x_new, f_new, g_new
        res = stat(x, gx)
        if record:
            traj.append((x.copy(), fx))
    else:
        if res <= cfg.grad_tol:
            status = "converged"
    return x, fx, res, it, status, traj


def _uniform_start(lo, hi, seed, index):
    rng = substream(seed, 0x57A7, index)
    return lo + (hi - lo) * rng.random(lo.shape)


def _best_run(runs):
    # lowest value, ties by restart index
    return min(range(len(runs)), key=lambda i: (runs[i].value, i))


def _map_runs(fn, n):
    workers = min(thread_count(), n)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, range(n)))
    return [fn(i) for i in range(n)]


def projected_gd(param: Parameterization, inst: ProblemInstance, cfg: SolveConfig = SolveConfig()) -> SolveReport:
    """Multi-start projected gradient descent in the chosen coordinates.

    Reported points are mapped back to (lambda, mu); ``reduced_grad_norm`` is
    measured in the coordinates that were optimized.
    """
    param = Parameterization(param)
    lo, hi = transformed_bounds(param, inst.box)
    record = cfg.record_trajectory if cfg.record_trajectory is not None else param is Parameterization.ORIGINAL

    def f(x):
        e = objective(param, inst, x, cfg.series)
        return e.value, e.grad

    def run(i):
        x0 = _uniform_start(lo, hi, cfg.seed, i)
        x, fx, res, it, status, traj = _descend(f, x0, lo, hi, cfg, record)
        if traj is not None:
            traj = [(inverse_transform(param, inst.box, p), v) for p, v in traj]
        return RunSummary(inverse_transform(param, inst.box, x0), inverse_transform(param, inst.box, x),
                          fx, res, it, status == "converged", status, traj)

    runs = _map_runs(run, cfg.restarts)
    b = runs[_best_run(runs)]
    rep = SolveReport(b.point, b.value, b.reduced_grad_norm, b.iters, b.converged, param.value,
                      b.trajectory, runs=runs)
    if cfg.oracle_grid:
        point, value = grid_oracle(param, inst, cfg.oracle_grid, cfg.series)
        rep.oracle_gap = b.value - value
        rep.oracle_point = point
    return rep


def _grid_search(fn, lo, hi, resolution, rounds=3, zoom=10.0):
    """Exhaustive grid search over a box plus zoomed refinement around the incumbent.

    Each refinement window is the old width / zoom, widened if needed to cover
    the neighbouring grid cells, and clipped to the box.
    """
    lo0, hi0 = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    wlo, whi = lo0.copy(), hi0.copy()
    best_x, best_v = None, math.inf
    for rnd in range(rounds + 1):
        axes = [np.linspace(a, b, resolution) for a, b in zip(wlo, whi)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo0.size)
        for x in mesh:
            v = fn(x)
            if v < best_v:
                best_x, best_v = x.copy(), v
        if rnd == rounds:
            break
        spacing = (whi - wlo) / (resolution - 1)
        half = np.maximum((whi - wlo) / (2.0 * zoom), spacing)
        wlo = np.maximum(lo0, best_x - half)
        whi = np.minimum(hi0, best_x + half)
    return best_x, best_v


def grid_oracle(param: Parameterization, inst: ProblemInstance, resolution: int = 21,
                cfg: SeriesConfig = SeriesConfig()):
    """Global minimum by exhaustive search; returns ((lambda, mu), value)."""
    if resolution < 11:
        raise ValueError("resolution must be >= 11")
    param = Parameterization(param)
    lo, hi = transformed_bounds(param, inst.box)

    def fn(x):
        try:
            return objective(param, inst, x, cfg).value
        except (InstabilityError, ValueError):
            return math.inf

    x, v = _grid_search(fn, lo, hi, resolution)
    return inverse_transform(param, inst.box, x), float(v)


# ---------------------------------------------------------------------------
# Jackson networks of M/M/1 stations


@dataclass(frozen=True)
class JacksonInstance:
    """Open network; ``box`` bounds every station's total arrival rate and service rate.

    ``econ`` is one EconomicSpec shared by all stations or a sequence of them.
    Exogenous rates are kept at or above ``lambda_floor``.
    """

    routing: np.ndarray
    econ: object
    box: RateBox
    lambda_floor: float = 0.0

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.routing, dtype=float))
        object.__setattr__(self, "routing", P)
        n = P.shape[0]
        if P.shape != (n, n) or n < 1:
            raise ValueError("routing must be a square N x N matrix")
        if np.any(P < 0) or np.any(P > 1):
            raise ValueError("routing probabilities must lie in [0, 1]")
        if n and np.max(np.abs(np.linalg.eigvals(P))) >= 1.0:
            raise ValueError("spectral radius of the routing matrix must be < 1 (open network)")
        if not self.box.lambda_hi < self.box.mu_lo:
            raise ValueError("need lambda_hi < mu_lo for every station to be stable")
        econ = self.econ
        if isinstance(econ, EconomicSpec):
            econ = (econ,) * n
        econ = tuple(econ)
        if len(econ) != n:
            raise ValueError("need one EconomicSpec per station")
        object.__setattr__(self, "econ", econ)

    @property
    def n_stations(self) -> int:
        return self.routing.shape[0]

    def traffic_map(self) -> np.ndarray:
        """M with Lambda = M lambda, i.e. (I - P^T)^-1."""
        a = np.eye(self.n_stations) - self.routing.T
        cond = np.linalg.cond(a)
        if not cond <= 1e12:
            raise SingularNetworkError(f"condition number of I - P^T is {cond:.3g}")
        return np.linalg.inv(a)


def jackson_objective(jinst: JacksonInstance, lam, mu_hat, M=None):
    """Value and gradients (w.r.t. lambda and mu-hat) of the summed R2-style objective."""
    M = jinst.traffic_map() if M is None else M
    lam = np.asarray(lam, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    big = M @ lam
    value = 0.0
    d_big = np.zeros_like(big)
    g_lam = np.zeros_like(lam)
    g_mu = np.zeros_like(mu_hat)
    for i, econ in enumerate(jinst.econ):
        tau = big[i] ** 2 / mu_hat[i]
        if not (0.0 < tau < 1.0):
            raise InstabilityError(f"station {i}: tau = {tau:g} outside (0, 1)")
        e = lhat_closed(MM1(), tau)
        mu = math.sqrt(mu_hat[i])
        value += e.value + econ.cost.value(mu) - econ.revenue.value(lam[i])
        d_big[i] = e.d1 * 2.0 * big[i] / mu_hat[i]
        g_mu[i] = -e.d1 * tau / mu_hat[i] + econ.cost.grad(mu) / (2.0 * mu)
        g_lam[i] = -econ.revenue.grad(lam[i])
    g_lam = g_lam + M.T @ d_big
    return float(value), g_lam, g_mu


def project_polytope(y, M, lo, hi, floor=0.0, max_sweeps=10_000, tol=1e-12):
    """Euclidean projection of y onto {x >= floor : lo <= M x <= hi} by Dykstra's method.

    Cycles through one slab per row of M and the orthant; raises if the sweeps
    run out before the iterate stops moving.
    """
    y = np.asarray(y, dtype=float)
    rows = [M[i] for i in range(M.shape[0])]
    norms = [float(r @ r) for r in rows]
    n_sets = len(rows) + 1
    incr = [np.zeros_like(y) for _ in range(n_sets)]
    x = y.copy()
    for _ in range(max_sweeps):
        x_start = x.copy()
        for j in range(n_sets):
            z = x + incr[j]
            if j < len(rows):
                v = rows[j] @ z
                if v < lo:
                    p = z + (lo - v) / norms[j] * rows[j]
                elif v > hi:
                    p = z - (v - hi) / norms[j] * rows[j]
                else:
                    p = z
            else:
                p = np.maximum(z, floor)
            incr[j] = z - p
            x = p
        if np.max(np.abs(x - x_start)) <= tol * max(1.0, np.max(np.abs(x))):
            return x
    raise RuntimeError("polytope projection did not converge within the sweep cap")


def solve_jackson(jinst: JacksonInstance, cfg: SolveConfig = SolveConfig(), oracle_resolution: int = 0) -> SolveReport:
    """Optimize exogenous rates lambda and mu-hat = mu^2 for every station.

    The stopping residual is the norm of the gradient mapping with unit step.
    ``best_point`` stacks (lambda_1..lambda_N, mu_1..mu_N).
    """
    n = jinst.n_stations
    M = jinst.traffic_map()
    b = jinst.box
    mlo, mhi = b.mu_lo ** 2, b.mu_hi ** 2

    def project(z):
        lam = project_polytope(z[:n], M, b.lambda_lo, b.lambda_hi, jinst.lambda_floor)
        return np.concatenate([lam, np.clip(z[n:], mlo, mhi)])

    def f(z):
        v, gl, gm = jinst_eval(z)
        return v, np.concatenate([gl, gm])

    def jinst_eval(z):
        return jackson_objective(jinst, z[:n], z[n:], M)

    def stat(z, g):
        return float(np.linalg.norm(z - project(z - g)))

    a = np.eye(n) - jinst.routing.T

    def run(i):
        rng = substream(cfg.seed, 0x7AC5, i)
        big = b.lambda_lo + (b.lambda_hi - b.lambda_lo) * rng.random(n)
        mu_hat = mlo + (mhi - mlo) * rng.random(n)
        z0 = project(np.concatenate([a @ big, mu_hat]))
        z, fz, res, it, status, traj = _descend(f, z0, None, None, cfg, bool(cfg.record_trajectory),
                                                project=project, stat=stat)
        to_orig = lambda w: np.concatenate([w[:n], np.sqrt(w[n:])])
        if traj is not None:
            traj = [(to_orig(p), v) for p, v in traj]
        return RunSummary(to_orig(z0), to_orig(z), fz, res, it, status == "converged", status, traj)

    runs = _map_runs(run, cfg.restarts)
    best = runs[_best_run(runs)]
    lam = best.point[:n]
    big = M @ lam
    rep = SolveReport(best.point, best.value, best.reduced_grad_norm, best.iters, best.converged, "r2",
                      best.trajectory, runs=runs,
                      extras={"total_arrivals": big,
                              "balance_residual": float(np.max(np.abs(big - lam - jinst.routing.T @ big)))})
    if oracle_resolution:
        point, value = jackson_grid_oracle(jinst, oracle_resolution)
        rep.oracle_gap = best.value - value
        rep.oracle_point = point
    return rep


def _station_min_over_mu(econ, big, mu_lo, mu_hi, resolution):
    """min over mu of L_q(big/mu) + c(mu) by grid search with refinement."""
    def fn(x):
        tau = (big / x[0]) ** 2
        if not tau < 1.0:
            return math.inf
        return lhat_closed(MM1(), tau).value + econ.cost.value(x[0])

    x, v = _grid_search(fn, [mu_lo], [mu_hi], resolution)
    return float(x[0]), v


def jackson_grid_oracle(jinst: JacksonInstance, resolution: int = 21):
    """Global minimum over the (Lambda, mu) grid; returns (stacked lambda/mu point, value).

    Searches total arrival rates Lambda (exogenous lambda = (I - P^T) Lambda
    must respect the floor); for each candidate the objective separates into
    one-dimensional minimizations over each station's mu.
    """
    if resolution < 11:
        raise ValueError("resolution must be >= 11")
    n = jinst.n_stations
    a = np.eye(n) - jinst.routing.T
    b = jinst.box
    cache = {}

    def inner(i, big):
        key = (i, float(big))
        if key not in cache:
            cache[key] = _station_min_over_mu(jinst.econ[i], big, b.mu_lo, b.mu_hi, resolution)
        return cache[key]

    def fn(big):
        lam = a @ big
        if np.any(lam < jinst.lambda_floor - 1e-15):
            return math.inf
        total = 0.0
        for i in range(n):
            try:
                total -= jinst.econ[i].revenue.value(lam[i])
            except ValueError:
                return math.inf
            total += inner(i, big[i])[1]
        return total

    big, value = _grid_search(fn, np.full(n, b.lambda_lo), np.full(n, b.lambda_hi), resolution)
    mus = np.array([inner(i, big[i])[0] for i in range(n)])
    return np.concatenate([a @ big, mus]), float(value)
