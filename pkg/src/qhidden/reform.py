"""The rate-control objective in its original coordinates and two convex reparameterizations.

========  ======================  =========================================
variant   variables               objective
========  ======================  =========================================
ORIGINAL  (lambda, mu)            L_q(lambda/mu) + c(mu) - r(lambda)
R1        (sqrt(lambda), mu)      L_q(pi(x, mu)) + c(mu) - r(x^2)
R2        (lambda, mu^2)          Lhat(pi(lambda, y)) + c(sqrt(y)) - r(lambda)
========  ======================  =========================================

with ``pi(x1, x2) = x1^2 / x2``. R1 feeds pi into ``L_q`` (pi is rho there),
R2 feeds it into ``Lhat`` (pi is tau = rho^2 there). All three share the same
minimum value; gradients and Hessians are analytic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import ExpMixture, GammaGamma, ProblemInstance, RateBox
from .qlength import SeriesConfig, lhat, lq
from .simulate import InstabilityError

__all__ = [
    "Parameterization", "ObjectiveEval", "pi", "pi_grad", "objective", "objective_hessian",
    "transform_point", "inverse_transform", "transformed_bounds", "strong_convexity_modulus_r2",
    "plk_constant", "has_convexity_certificate", "AssumptionViolationError",
]


class Parameterization(str, enum.Enum):
    ORIGINAL = "original"
    R1 = "r1"
    R2 = "r2"


class AssumptionViolationError(ValueError):
    """A structural hypothesis needed for a bound does not hold."""


@dataclass(frozen=True)
class ObjectiveEval:
    value: float
    grad: np.ndarray
    rho: float
    tau: float
    certified: bool = True  # False when no convexity result covers the queue family


def pi(x1, x2):
    """x1^2 / x2."""
    return x1 * x1 / x2


def pi_grad(x1, x2):
    return np.array([2.0 * x1 / x2, -x1 * x1 / (x2 * x2)])


def _pi_hess(x1, x2):
    return np.array([[2.0 / x2, -2.0 * x1 / x2 ** 2],
                     [-2.0 * x1 / x2 ** 2, 2.0 * x1 * x1 / x2 ** 3]])


def has_convexity_certificate(inst: ProblemInstance) -> bool:
    return not isinstance(inst.queue, ExpMixture)


def transformed_bounds(param: Parameterization, box: RateBox):
    """(lower, upper) corners of the box in the variant's coordinates."""
    param = Parameterization(param)
    lo, hi = box.lower.astype(float), box.upper.astype(float)
    if param is Parameterization.R1:
        lo[0], hi[0] = math.sqrt(lo[0]), math.sqrt(hi[0])
    elif param is Parameterization.R2:
        lo[1], hi[1] = lo[1] ** 2, hi[1] ** 2
    return lo, hi


def _check_inside(param, box, point, slack=1e-12):
    lo, hi = transformed_bounds(param, box)
    p = np.asarray(point, dtype=float)
    scale = np.maximum(1.0, np.abs(hi))
    if p.shape != (2,) or np.any(p < lo - slack * scale) or np.any(p > hi + slack * scale):
        raise ValueError(f"point {p.tolist()} lies outside the {Parameterization(param).value} box")
    return p


def transform_point(param: Parameterization, box: RateBox, point):
    """Original (lambda, mu) -> the variant's coordinates."""
    lam, mu = _check_inside(Parameterization.ORIGINAL, box, point)
    param = Parameterization(param)
    if param is Parameterization.R1:
        return np.array([math.sqrt(lam), mu])
    if param is Parameterization.R2:
        return np.array([lam, mu * mu])
    return np.array([lam, mu])


def inverse_transform(param: Parameterization, box: RateBox, point):
    """The variant's coordinates -> original (lambda, mu)."""
    x1, x2 = _check_inside(param, box, point)
    param = Parameterization(param)
    if param is Parameterization.R1:
        return np.array([x1 * x1, x2])
    if param is Parameterization.R2:
        return np.array([x1, math.sqrt(x2)])
    return np.array([x1, x2])


def _queue_part(param, inst, x1, x2, cfg):
    """(value, d1, d2, rho, tau) of the queue term along its scalar argument."""
    if param is Parameterization.R2:
        tau = pi(x1, x2)
        rho = math.sqrt(tau)
        _check_stable(inst, rho)
        e = lhat(inst.queue, tau, cfg)
    else:
        rho = x1 / x2 if param is Parameterization.ORIGINAL else pi(x1, x2)
        tau = rho * rho
        _check_stable(inst, rho)
        e = lq(inst.queue, rho, cfg)
    return e.value, e.d1, e.d2, rho, tau


def _check_stable(inst, rho):
    bound = inst.queue.stability_bound
    if not (0.0 < rho < bound):
        raise InstabilityError(f"rho = {rho:g} is outside (0, {bound:g})")


def _arg_grad_hess(param, x1, x2):
    if param is Parameterization.ORIGINAL:
        return (np.array([1.0 / x2, -x1 / x2 ** 2]),
                np.array([[0.0, -1.0 / x2 ** 2], [-1.0 / x2 ** 2, 2.0 * x1 / x2 ** 3]]))
    return pi_grad(x1, x2), _pi_hess(x1, x2)


def _econ_terms(param, econ, x1, x2):
    """Value, gradient and Hessian diagonal of c(.) - r(.) in the variant's coordinates."""
    rev, cst = econ.revenue, econ.cost
    if param is Parameterization.R1:
        lam = x1 * x1
        r, r1, r2 = rev.value(lam), rev.grad(lam), rev.hess(lam)
        rv, rg, rh = r, 2.0 * x1 * r1, 4.0 * lam * r2 + 2.0 * r1
    else:
        rv, rg, rh = rev.value(x1), rev.grad(x1), rev.hess(x1)
    if param is Parameterization.R2:
        mu = math.sqrt(x2)
        c1 = cst.grad(mu)
        cv, cg = cst.value(mu), c1 / (2.0 * mu)
        ch = cst.hess(mu) / (4.0 * x2) - c1 / (4.0 * x2 * mu)
    else:
        cv, cg, ch = cst.value(x2), cst.grad(x2), cst.hess(x2)
    return (float(cv - rv), np.array([-float(rg), float(cg)]),
            np.array([-float(rh), float(ch)]))


def objective(param: Parameterization, inst: ProblemInstance, point,
              cfg: SeriesConfig = SeriesConfig()) -> ObjectiveEval:
    """Objective value and analytic gradient at ``point`` (in the variant's coordinates)."""
    param = Parameterization(param)
    x1, x2 = _check_inside(param, inst.box, point)
    q, q1, _, rho, tau = _queue_part(param, inst, x1, x2, cfg)
    g_arg, _ = _arg_grad_hess(param, x1, x2)
    e, e_grad, _ = _econ_terms(param, inst.econ, x1, x2)
    grad = q1 * g_arg + e_grad
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError(f"non-finite gradient at {point}")
    return ObjectiveEval(float(q + e), grad, float(rho), float(tau), has_convexity_certificate(inst))


def objective_hessian(param: Parameterization, inst: ProblemInstance, point,
                      cfg: SeriesConfig = SeriesConfig()) -> np.ndarray:
    """Analytic 2x2 Hessian (needs a queue evaluator that returns d2)."""
    param = Parameterization(param)
    x1, x2 = _check_inside(param, inst.box, point)
    _, q1, q2, _, _ = _queue_part(param, inst, x1, x2, cfg)
    g_arg, h_arg = _arg_grad_hess(param, x1, x2)
    _, _, e_diag = _econ_terms(param, inst.econ, x1, x2)
    return q2 * np.outer(g_arg, g_arg) + q1 * h_arg + np.diag(e_diag)


def strong_convexity_modulus_r2(inst: ProblemInstance) -> float:
    """Lower bound on the smallest Hessian eigenvalue of R2 over the box (Gamma families).

    Built from the first Spitzer term's lower bound on Lhat' at the corner
    (lambda_lo, mu_hi) and the revenue's strong-concavity modulus alpha_r.
    """
    q = inst.queue
    if not isinstance(q, GammaGamma):
        raise TypeError("the modulus is available for Gamma(k,1)/Gamma(m,1) queues only")
    alpha = inst.econ.alpha_r
    if not alpha > 0:
        raise AssumptionViolationError("a strongly concave revenue (alpha_r > 0) is required")
    k, m = q.k, q.m
    lam, mu = inst.box.lambda_lo, inst.box.mu_hi
    log_b = (math.log((k + m) * mu / (2.0 * k * lam))
             + math.lgamma(k + m) - math.lgamma(m) - math.lgamma(k)
             + m * math.log(mu / (lam + mu)) + k * math.log(lam / (lam + mu)))
    b = math.exp(log_b)
    return 2.0 * alpha * lam ** 2 * b / (alpha * mu ** 6 + 2.0 * b * (lam ** 2 + mu ** 4))


def plk_constant(inst: ProblemInstance) -> float:
    """Gradient-dominance constant alpha_H * min(1, 2 mu_lo)^2 of the original problem."""
    return strong_convexity_modulus_r2(inst) * min(1.0, 2.0 * inst.box.mu_lo) ** 2
