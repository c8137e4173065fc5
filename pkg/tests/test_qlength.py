import math
import warnings

import pytest
from scipy import integrate as sci_int, special as sc
from hypothesis import given, settings, strategies as st

from qhidden.model import MM1, MG1, ExpMixture, GammaGamma, GIGIkApprox
from qhidden.qlength import (BOUNDARY_MARGIN, InstabilityWarning, Method, SeriesConfig, SeriesTruncationError,
                             lhat, lhat_beta_series, lhat_closed, lhat_spitzer_mc, lq, lq_closed, ratio_bound,
                             spitzer_terms_gamma)
from qhidden.simulate import InstabilityError


def term_oracle(k, m, n, s):
    """(1/n) E[(s X - Y)^+] with X ~ Gamma(mn), Y ~ Gamma(kn), by one-dimensional quadrature."""
    a, b = m * n, k * n

    def inner(y):
        t = y / s
        # E[(sX - y)^+] = s E[X; X > t] - y P(X > t)
        return sc.gammaincc(a + 1, t) * s * a - y * sc.gammaincc(a, t)

    dens = lambda y: math.exp((b - 1) * math.log(y) - y - math.lgamma(b)) if y > 0 else 0.0
    hi = b + 60 * math.sqrt(b) + 60
    val, _ = sci_int.quad(lambda y: dens(y) * inner(y), 0, hi, epsabs=1e-15, epsrel=1e-13, limit=400)
    return val / n


def richardson(f, x, h):
    """Central difference with one Richardson step (error O(h^4))."""
    d = lambda step: (f(x + step) - f(x - step)) / (2 * step)
    return (4 * d(h / 2) - d(h)) / 3


def lhat_oracle(k, m, tau, n_terms=400):
    s = math.sqrt(tau)
    total = 0.0
    for n in range(1, n_terms + 1):
        t = term_oracle(k, m, n, s)
        total += t
        if t < 1e-16 * total:
            break
    return total


@pytest.mark.parametrize("tau", [0.05, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99])
def test_beta_series_matches_mm1_closed_form(tau):
    e = lhat_beta_series(1, 1, tau)
    assert e.method is Method.BETA_SERIES
    assert e.value == pytest.approx(tau / (1 - math.sqrt(tau)), abs=1e-8)
    c = lhat_closed(MM1(), tau)
    assert e.d1 == pytest.approx(c.d1, rel=1e-9)
    assert e.d2 == pytest.approx(c.d2, rel=1e-8)


@pytest.mark.parametrize("k,m,tau", [(2, 3, 0.2), (3, 1.5, 1.5), (1.5, 1, 0.8), (5, 2, 3.0)])
def test_beta_series_matches_quadrature_oracle(k, m, tau):
    assert lhat_beta_series(k, m, tau).value == pytest.approx(lhat_oracle(k, m, tau), rel=1e-8)


@pytest.mark.parametrize("k,m,n,tau", [(1, 1, 1, 0.25), (2, 3, 2, 0.3), (3, 1.5, 4, 2.0)])
def test_single_terms_match_quadrature_oracle(k, m, n, tau):
    val, d1, d2 = spitzer_terms_gamma(k, m, [n], tau)
    assert val[0] == pytest.approx(term_oracle(k, m, n, math.sqrt(tau)), rel=1e-10)
    h = 1e-4 * tau
    f = lambda t: term_oracle(k, m, n, math.sqrt(t))
    assert d1[0] == pytest.approx((f(tau + h) - f(tau - h)) / (2 * h), rel=1e-6)


def test_first_term_for_exponentials_is_closed_form():
    # E[(sX - Y)^+] = s^2 / (1 + s) for unit exponentials
    s = 0.5
    val = spitzer_terms_gamma(1, 1, [1], s * s)[0][0]
    assert val == pytest.approx(s * s / (1 + s), rel=1e-13)


@pytest.mark.parametrize("k,m,tau", [(2, 3, 0.3), (3, 1, 5.0), (1, 5, 0.02)])
def test_beta_series_derivatives_match_finite_differences(k, m, tau):
    e = lhat_beta_series(k, m, tau)
    h = 1e-3 * min(tau, (k / m) ** 2 - tau)
    f = lambda t: lhat_beta_series(k, m, t).value
    g = lambda t: lhat_beta_series(k, m, t).d1
    assert e.d1 == pytest.approx(richardson(f, tau, h), rel=1e-8)
    assert e.d2 == pytest.approx(richardson(g, tau, h), rel=1e-8)


def test_near_boundary_accuracy():
    tau = 0.9999
    e = lhat_beta_series(1, 1, tau)
    assert e.value == pytest.approx(tau / (1 - math.sqrt(tau)), rel=1e-10)
    assert e.tail_bound <= 1e-9 * e.value


def test_boundary_refusal():
    with pytest.raises(InstabilityError):
        lhat_beta_series(1, 1, 1.0)
    with pytest.raises(InstabilityError):
        lhat_beta_series(2, 1, 4.0 * (1 - 0.5 * BOUNDARY_MARGIN))
    with pytest.raises(ValueError):
        lhat_beta_series(0.5, 1, 0.1)


def test_truncation_error_reports_bound():
    cfg = SeriesConfig(n_max=10, direct_terms=0)
    with pytest.raises(SeriesTruncationError) as info:
        lhat_beta_series(1, 1, 0.9, cfg)
    assert info.value.achieved_bound > 0


def test_ratio_bound_is_one_at_threshold():
    assert ratio_bound(2, 3, 3 / 5) == pytest.approx(1.0, abs=1e-15)
    assert ratio_bound(2, 3, 0.8) < 1.0


def test_closed_forms():
    assert lq_closed(MM1(), 0.5).value == pytest.approx(0.5)
    # Pollaczek-Khinchine with Var(S) = 0 halves the M/M/1 value
    assert lq_closed(MG1(0.0), 0.5).value == pytest.approx(0.25)
    g = lq_closed(GIGIkApprox(2, 1.0, 1.0), 0.5)
    assert g.value == pytest.approx(0.5 ** math.sqrt(6) / 0.5)
    assert lhat_closed(MM1(), 0.25).value == pytest.approx(0.25 / 0.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.95), st.sampled_from([MM1(), MG1(0.5), GIGIkApprox(3, 0.5, 2.0)]))
def test_lq_and_lhat_agree(rho, fam):
    a = lq(fam, rho)
    b = lhat(fam, rho * rho)
    assert a.value == pytest.approx(b.value, rel=1e-12)
    assert a.d1 == pytest.approx(2 * rho * b.d1, rel=1e-10)


def test_lq_gamma_chain_rule():
    fam = GammaGamma(2.0, 2.0)
    rho, h = 0.6, 1e-5
    e = lq(fam, rho)
    assert e.d1 == pytest.approx((lq(fam, rho + h).value - lq(fam, rho - h).value) / (2 * h), rel=1e-6)
    assert e.d2 == pytest.approx((lq(fam, rho + h).d1 - lq(fam, rho - h).d1) / (2 * h), rel=1e-6)


def test_monte_carlo_agrees_with_series():
    cfg = SeriesConfig(mc_samples=40_000, mc_terms=100)
    mc = lhat_spitzer_mc(GammaGamma(2.0, 2.0), 0.25, cfg)
    ref = lhat_beta_series(2, 2, 0.25).value
    assert abs(mc.value - ref) < 4 * mc.std_error
    assert math.isnan(mc.d2)


def test_monte_carlo_is_deterministic_and_thread_invariant(monkeypatch):
    cfg = SeriesConfig(mc_samples=5000, mc_terms=50, seed=7)
    fam = ExpMixture((0.5, 2.0), (0.5, 0.5))
    a = lhat_spitzer_mc(fam, 0.3, cfg)
    monkeypatch.setenv("QHIDDEN_THREADS", "3")
    b = lhat_spitzer_mc(fam, 0.3, cfg)
    assert (a.value, a.d1, a.std_error, a.tail_bound) == (b.value, b.d1, b.std_error, b.tail_bound)


def test_monte_carlo_warns_when_terms_do_not_decay():
    cfg = SeriesConfig(mc_samples=2000, mc_terms=30)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        e = lhat_spitzer_mc(ExpMixture((1.0,), (1.0,)), 0.999999, cfg)
    assert any(issubclass(w.category, InstabilityWarning) for w in caught) or e.tail_bound > 0


def test_series_config_validation():
    with pytest.raises(ValueError):
        SeriesConfig(tail_tol=0.5)
    with pytest.raises(ValueError):
        SeriesConfig(n_max=0)
