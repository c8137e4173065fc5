import math

import numpy as np
import pytest
from scipy import integrate

from qhidden.landscape import (Verdict, certify_family_convexity, certify_lhat_convexity, check_D_nonneg,
                               check_F_nonneg, check_s_monotone, counterexample, endpoint_grid, eval_D,
                               f_function, mixture_l1_prime, plk_audit, s_series, term_convexity)
from qhidden.model import MM1, MG1, ExpMixture, GIGIkApprox
from qhidden.qlength import UnsupportedFamilyError

LATTICE = [1.0, 1.5, 2.0, 3.0, 5.0]


def test_endpoint_grid_clusters_at_both_ends():
    g = endpoint_grid(0.0, 1.0, 41, 1e-4)
    assert g[0] == pytest.approx(1e-4) and g[-1] == pytest.approx(1 - 1e-4)
    assert np.all(np.diff(g) > 0)
    assert g[1] - g[0] < g[20] - g[19]
    assert g[-1] - g[-2] < g[20] - g[19]


@pytest.mark.parametrize("k,m", [(1.0, 1.0), (3.0, 1.5), (2.0, 2.0)])
def test_gamma_families_certify_convex(k, m):
    cert = certify_lhat_convexity(k, m, grid_n=41)
    assert cert.verdict is Verdict.CONVEX
    assert cert.witness is None
    assert cert.fd_max_rel_err < 1e-4
    assert cert.grid[-1] < (k / m) ** 2


def test_mm1_certificate_matches_closed_form():
    cert = certify_lhat_convexity(1.0, 1.0, grid_n=21)
    t = cert.grid
    s = np.sqrt(t)
    # d^2/dtau^2 of tau / (1 - sqrt(tau))
    exact = (3.0 - s) / (4.0 * s * (1.0 - s) ** 3)
    assert cert.second_derivative == pytest.approx(exact, rel=1e-8)


@pytest.mark.parametrize("fam", [MM1(), MG1(2.0), GIGIkApprox(1, 1.0, 1.0), GIGIkApprox(2, 1.0, 1.0),
                                 GIGIkApprox(4, 0.5, 2.0)])
def test_closed_form_families_certify_convex(fam):
    cert = certify_family_convexity(fam, grid_n=51)
    assert cert.verdict is Verdict.CONVEX
    assert cert.fd_max_rel_err < 1e-4


def test_mixture_certificate_is_unsupported():
    with pytest.raises(UnsupportedFamilyError):
        certify_family_convexity(ExpMixture((0.1, 10.0), (0.5, 0.5)))


def test_certify_rejects_small_grid():
    with pytest.raises(ValueError):
        certify_lhat_convexity(1.0, 1.0, grid_n=5)


def test_s_values():
    assert s_series(1, 1, 1) == pytest.approx(0.25, rel=1e-14)
    assert s_series(1, 1, 2) == pytest.approx(0.375, rel=1e-14)
    # Gamma(6)/Gamma(3)^2 / 4^3
    assert s_series(1, 1, 3) == pytest.approx(120 / 4 / 64, rel=1e-14)


@pytest.mark.parametrize("k", LATTICE)
@pytest.mark.parametrize("m", LATTICE)
def test_s_monotone_on_lattice(k, m):
    ok, first = check_s_monotone(k, m, 50)
    assert ok and first is None


def test_s_monotone_far_out_without_overflow():
    ok, _ = check_s_monotone(2.0, 3.0, 5000)
    assert ok


def test_F_values():
    assert f_function(1, 1, 0.5) == pytest.approx(math.log(2) - 2 * math.log(1.25), rel=1e-14)
    assert f_function(1, 1, 0.5) == pytest.approx(0.2469, abs=1e-4)
    assert abs(f_function(2.0, 3.0, 1e-10)) < 1e-9


@pytest.mark.parametrize("k", LATTICE[:4])
@pytest.mark.parametrize("m", LATTICE[:4])
def test_F_nonneg_on_lattice(k, m):
    ok, lo = check_F_nonneg(k, m)
    assert ok and lo >= -1e-12


def test_D_values():
    d = eval_D(1.0, 1.0, 0.75)
    assert d.value >= -d.tail_bound
    near = eval_D(1.0, 1.0, 1 - 1e-4)
    mid = eval_D(1.0, 1.0, 0.6)
    assert abs(near.value) < abs(mid.value)
    with pytest.raises(ValueError):
        eval_D(1.0, 1.0, 0.4)


def test_D_nonneg_grid():
    ok, lo, a = check_D_nonneg(2.0, 1.0, 51)
    assert ok
    assert 1.0 / 3.0 < a < 1.0


def _l1_prime_direct(rates, tau):
    """d/dtau of E[(sqrt(tau) S - T)^+] for the equal mixture, by quadrature."""
    rates = np.asarray(rates)

    def mean_plus(sq):
        total = 0.0
        for li in rates:
            for lj in rates:
                # (sq S - T)^+ given S=x has mean (sq x - (1 - e^{-lj sq x})/lj)
                g = lambda x: li * math.exp(-li * x) * (sq * x - (1 - math.exp(-lj * sq * x)) / lj)
                total += integrate.quad(g, 0, np.inf, epsabs=1e-15, epsrel=1e-12, limit=200)[0]
        return total / rates.size ** 2

    h = 1e-3 * tau
    return (mean_plus(math.sqrt(tau + h)) - mean_plus(math.sqrt(tau - h))) / (2 * h)


@pytest.mark.parametrize("tau", [1e-4, 0.01, 0.3])
def test_mixture_first_term_derivative_matches_quadrature(tau):
    assert mixture_l1_prime((0.1, 10.0), tau) == pytest.approx(_l1_prime_direct((0.1, 10.0), tau), rel=1e-5)


def test_counterexample_report():
    r = counterexample()
    assert r.separation
    assert r.lower_bound_at_tau1 > 219.0
    assert r.upper_bound_at_tau2 < 135.0
    assert r.l1_prime_tau2 == pytest.approx(14.59, abs=0.01)
    assert r.tilted_mean < 8.0 and r.mgf_service < 1.13 and r.mgf_interarrival < 0.66
    assert all(r.checks.values())
    assert r.rounded_upper_bound == 135.0


def test_counterexample_moments():
    fam = ExpMixture((0.1, 10.0), (0.5, 0.5))
    t = 0.02
    tilted = 0.5 * sum(l / (l - t) ** 2 for l in (0.1, 10.0))
    assert fam.tilted_mean(t) == pytest.approx(tilted, rel=1e-14)
    assert fam.mgf(-0.2) == pytest.approx(0.5 * sum(l / (l + 0.2) for l in (0.1, 10.0)), rel=1e-14)


def test_single_term_is_not_convex_but_partial_sums_become_convex():
    r = term_convexity(grid_n=41, n_max=40)
    assert r.first_term_second_difference < 0
    assert r.n0 is not None and r.n0 > 1
    assert np.all(r.min_partial_d2[r.n0 - 1:] >= -1e-8)


def test_plk_audit_passes(plk_instance):
    rep = plk_audit(plk_instance, grid_n=11)
    assert rep.passed
    assert rep.n_violations == 0
    assert rep.mu_plk > 0


def test_plk_audit_is_falsifiable(plk_instance):
    rep = plk_audit(plk_instance, grid_n=11, inflate=1e6)
    assert not rep.passed
    assert rep.n_violations > 0


def test_plk_slack_near_zero_at_minimizer(plk_instance):
    rep = plk_audit(plk_instance, grid_n=21)
    assert rep.worst_slack >= -1e-9
