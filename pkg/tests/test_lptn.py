"""LPTN parameters, density, CDF, quantile and sampler."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from robpcr.errors import DomainError
from robpcr.lptn import (
    RHO_MIN,
    lptn_cdf,
    lptn_logpdf,
    lptn_params,
    lptn_quantile,
    lptn_sample,
    lptn_score,
)

P = lptn_params(0.95)

# 40-digit mpmath evaluations of the defining formulas; the tail CDF and
# quantile were cross-checked against mpmath quadrature of the density.
ORACLE = {
    0.95: (1.9599639845400542355, 3.0833536221397200883),
    0.99: (2.5758293035489007610, 7.0481888442052910274),
    0.90: (1.6448536269514727149, 1.6884618478083793228),
}
LOGPDF_10 = -9.4924734238930007882
CDF_5 = 0.99830076731514681241
QUANTILE_099 = 2.4738887465693790295

rhos = st.floats(min_value=RHO_MIN + 1e-3, max_value=0.999)


@pytest.mark.parametrize("rho", sorted(ORACLE))
def test_params_match_oracle(rho):
    p = lptn_params(rho)
    tau, lam = ORACLE[rho]
    np.testing.assert_allclose(p.tau, tau, rtol=1e-14)
    np.testing.assert_allclose(p.lam, lam, rtol=1e-13)


def test_params_near_lower_boundary():
    p = lptn_params(RHO_MIN + 1e-9)
    assert 1.0 < p.tau < 1.0 + 1e-6
    assert 0.0 < p.lam < 1e-6


@pytest.mark.parametrize("rho", [RHO_MIN, 0.5, 1.0, 1.5, float("nan")])
def test_params_reject_out_of_range(rho):
    with pytest.raises(DomainError, match="open interval"):
        lptn_params(rho)


def test_logpdf_core_and_tail_values():
    np.testing.assert_allclose(lptn_logpdf(0.0, P), math.log(0.3989422804014327), rtol=1e-15)
    np.testing.assert_allclose(lptn_logpdf(10.0, P), LOGPDF_10, rtol=1e-13)


def test_logpdf_continuous_at_tau():
    np.testing.assert_allclose(lptn_logpdf(P.tau, P), lptn_logpdf(P.tau + 1e-12, P), atol=1e-8)


def test_logpdf_finite_far_in_tail():
    v = lptn_logpdf(np.array([1e50, 1e300]), P)
    assert np.all(np.isfinite(v))


def test_score_matches_finite_differences():
    x = np.array([-40.0, -3.0, -1.0, 0.3, 1.5, 2.2, 7.0, 1e4])
    h = 1e-6 * np.maximum(1.0, np.abs(x))
    fd = (lptn_logpdf(x + h, P) - lptn_logpdf(x - h, P)) / (2 * h)
    np.testing.assert_allclose(lptn_score(x, P), fd, rtol=1e-6, atol=1e-9)


def test_density_integrates_to_one():
    # core plus both tails on [-1e6, 1e6]; the mass beyond is analytic
    f = lambda x: math.exp(lptn_logpdf(x, P))
    core, _ = integrate.quad(f, -P.tau, P.tau, epsabs=1e-13)
    # substitute x = exp(s) so the slowly decaying tail is well resolved
    tail, _ = integrate.quad(lambda s: f(math.exp(s)) * math.exp(s), math.log(P.tau), math.log(1e6), epsabs=1e-13)
    beyond = 0.5 * (1.0 - P.rho) * (P.log_tau / math.log(1e6)) ** P.lam
    np.testing.assert_allclose(core + 2 * tail + 2 * beyond, 1.0, atol=1e-6)
    np.testing.assert_allclose(core, P.rho, atol=1e-12)


def test_tail_cdf_matches_quadrature():
    np.testing.assert_allclose(lptn_cdf(5.0, P), CDF_5, rtol=1e-14)
    f = lambda x: math.exp(lptn_logpdf(x, P))
    quad, _ = integrate.quad(f, P.tau, 5.0, epsabs=1e-14)
    np.testing.assert_allclose(lptn_cdf(5.0, P), stats.norm.cdf(P.tau) + quad, atol=1e-12)


def test_quantile_values():
    assert lptn_quantile(0.5, P) == 0.0
    np.testing.assert_allclose(lptn_quantile((1 + P.rho) / 2, P), P.tau, rtol=1e-14)
    np.testing.assert_allclose(lptn_quantile(0.99, P), QUANTILE_099, rtol=1e-13)
    np.testing.assert_allclose(lptn_quantile(0.01, P), -QUANTILE_099, rtol=1e-13)


def test_quantile_equals_normal_quantile_on_core():
    u = np.linspace((1 - P.rho) / 2, (1 + P.rho) / 2, 101)
    np.testing.assert_array_equal(lptn_quantile(u, P), stats.norm.ppf(u))


@pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.1, float("nan")])
def test_quantile_rejects_out_of_range(u):
    with pytest.raises(DomainError):
        lptn_quantile(u, P)


def test_quantile_cdf_identity_on_grid():
    x = np.linspace(-30.0, 30.0, 1000)
    np.testing.assert_allclose(lptn_quantile(lptn_cdf(x, P), P), x, rtol=1e-10, atol=1e-10)
    u = np.linspace(1e-6, 1 - 1e-6, 1000)
    np.testing.assert_allclose(lptn_cdf(lptn_quantile(u, P), P), u, atol=1e-10)


def test_sample_first_draw_is_quantile_of_first_uniform():
    u1 = np.random.default_rng(7).random()
    np.testing.assert_array_equal(lptn_sample(1, P, seed=7), [lptn_quantile(u1, P)])


def test_sample_core_fraction_and_ks():
    x = lptn_sample(100_000, P, seed=11)
    assert abs(np.mean(np.abs(x) <= P.tau) - 0.95) < 0.01
    xs = np.sort(x)
    F = lptn_cdf(xs, P)
    i = np.arange(1, xs.shape[0] + 1) / xs.shape[0]
    assert max(np.max(i - F), np.max(F - (i - 1 / xs.shape[0]))) < 0.01


def test_sample_reproducible():
    np.testing.assert_array_equal(lptn_sample(50, P, seed=3), lptn_sample(50, P, seed=3))


def test_sample_rejects_nonpositive_n():
    with pytest.raises(DomainError):
        lptn_sample(0, P)


@settings(max_examples=50, deadline=None)
@given(rhos, st.floats(min_value=-1e12, max_value=1e12, allow_nan=False))
def test_logpdf_symmetric(rho, x):
    p = lptn_params(rho)
    assert lptn_logpdf(x, p) == lptn_logpdf(-x, p)


@settings(max_examples=50, deadline=None)
@given(rhos, st.floats(min_value=0.0, max_value=1.0))
def test_logpdf_is_normal_on_core(rho, frac):
    p = lptn_params(rho)
    x = frac * p.tau
    assert lptn_logpdf(x, p) == -0.5 * x * x - 0.5 * math.log(2 * math.pi)


@settings(max_examples=50, deadline=None)
@given(rhos, st.floats(min_value=1e-9, max_value=1 - 1e-9), st.floats(min_value=1e-9, max_value=1 - 1e-9))
def test_quantile_monotone(rho, u, v):
    # near the lower rho bound the tails are so heavy that extreme quantiles overflow
    p = lptn_params(rho)
    if u < v:
        a, b = lptn_quantile(u, p), lptn_quantile(v, p)
        assert a <= b
        if np.isfinite(a) and np.isfinite(b):
            assert a < b


@settings(max_examples=50, deadline=None)
@given(rhos, st.floats(min_value=-50.0, max_value=50.0))
def test_quantile_inverts_cdf(rho, x):
    p = lptn_params(rho)
    np.testing.assert_allclose(lptn_quantile(lptn_cdf(x, p), p), x, rtol=1e-9, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(rhos)
def test_params_invariants(rho):
    p = lptn_params(rho)
    assert p.tau > 1.0 and p.lam > 0.0
    np.testing.assert_allclose(2 * stats.norm.cdf(p.tau) - 1, rho, rtol=1e-12)
