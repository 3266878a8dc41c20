import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evosis.errors import DomainError
from evosis.params import (KernelKind, KernelSpec, ModelParams, condp_constants, connection_prob,
                           gamma_from_tau, kappa, kernel_eval, mean_degree,
                           mean_degree_quadrature, pi_integral, t_loc_lower, t_loc_upper,
                           tau_from_gamma, thresholds, update_rate, update_rates, validate_condp)

FACTOR = KernelSpec(KernelKind.FACTOR, 0.5)
PA = KernelSpec(KernelKind.PREF_ATTACH, 0.5)


def mp(kind="factor", gamma=0.5, **kw):
    return ModelParams.create(kind, gamma=gamma, **kw)


# -- tau / gamma

def test_tau_gamma_examples():
    assert tau_from_gamma(0.5) == 3.0
    assert gamma_from_tau(3.0) == 0.5
    assert tau_from_gamma(0.25) == 5.0


@pytest.mark.parametrize("g", [0.0, 1.0, -0.1, 1.5, math.nan])
def test_tau_from_gamma_domain(g):
    with pytest.raises(DomainError):
        tau_from_gamma(g)


@pytest.mark.parametrize("t", [2.0, 1.5, math.inf])
def test_gamma_from_tau_domain(t):
    with pytest.raises(DomainError):
        gamma_from_tau(t)


@given(st.floats(0.01, 0.99))
def test_tau_gamma_inverse(g):
    assert gamma_from_tau(tau_from_gamma(g)) == pytest.approx(g, rel=1e-14)


# -- kernel

def test_kernel_examples():
    assert kernel_eval(FACTOR, 0.25, 1.0) == pytest.approx(2.0)
    assert kernel_eval(PA, 0.25, 1.0) == pytest.approx(2.0)
    for k in (KernelSpec("factor", 0.3, 1.7), KernelSpec("pa", 0.3, 1.7)):
        assert kernel_eval(k, 1.0, 1.0) == pytest.approx(1.7)


@pytest.mark.parametrize("x,y", [(0.0, 0.5), (0.5, -1.0), (1.5, 0.5)])
def test_kernel_domain(x, y):
    with pytest.raises(DomainError):
        kernel_eval(FACTOR, x, y)


@pytest.mark.parametrize("kind", ["factor", "pa"])
def test_kernel_symmetry_exact(kind):
    k = KernelSpec(kind, 0.37, 1.3)
    rng = np.random.default_rng(0)
    x, y = rng.uniform(1e-9, 1, 10_000), rng.uniform(1e-9, 1, 10_000)
    assert np.array_equal(kernel_eval(k, x, y), kernel_eval(k, y, x))


@settings(max_examples=200)
@given(st.sampled_from(["factor", "pa"]), st.floats(0.05, 0.95),
       st.floats(1e-6, 1.0), st.floats(1e-6, 1.0), st.floats(1e-6, 1.0))
def test_kernel_monotone(kind, g, x1, x2, y):
    k = KernelSpec(kind, g)
    lo, hi = min(x1, x2), max(x1, x2)
    assert kernel_eval(k, lo, y) >= kernel_eval(k, hi, y) * (1 - 1e-12)


def test_kernel_spec_validation():
    with pytest.raises(DomainError):
        KernelSpec("factor", 1.0)
    with pytest.raises(DomainError):
        KernelSpec("factor", 0.5, 0.0)
    with pytest.raises(DomainError):
        KernelSpec("bogus", 0.5)


# -- connection probability

def test_connection_prob_examples():
    assert connection_prob(mp(n=100), 25, 100) == pytest.approx(0.02)
    assert connection_prob(mp(n=4), 1, 4) == pytest.approx(0.5)
    assert connection_prob(mp(n=100), 100, 25) == connection_prob(mp(n=100), 25, 100)


def test_connection_prob_invalid():
    with pytest.raises(DomainError):
        connection_prob(mp(n=1), 1, 1)
    with pytest.raises(DomainError):
        connection_prob(mp(n=10), 3, 3)
    with pytest.raises(DomainError):
        connection_prob(mp(n=10), 0, 3)


def test_connection_prob_truncates():
    p = mp(gamma=0.9, beta=50.0, n=10)
    assert connection_prob(p, 1, 2) == 1.0


# -- update rates

def test_update_rate_examples():
    assert update_rate(mp(n=100, eta=-1.0), 1) == pytest.approx(0.1)
    assert all(update_rate(mp(n=50, eta=0.0, kappa0=2.5), i) == 2.5 for i in range(1, 51))
    assert update_rate(mp(n=100, eta=1.0), 1) == pytest.approx(10.0)


def test_update_rates_vector_matches_scalar():
    p = mp("pa", 0.4, n=37, eta=-0.7, kappa0=1.3)
    v = update_rates(p)
    assert v == pytest.approx([update_rate(p, i) for i in range(1, 38)], rel=1e-15)


def test_workload_warning():
    with pytest.warns(RuntimeWarning):
        mp(gamma=0.6, eta=1.0)


# -- mean degree

def test_mean_degree_examples():
    assert mean_degree(FACTOR, 0.25) == pytest.approx(4.0)
    assert mean_degree(FACTOR, 1.0) == pytest.approx(2.0)
    assert mean_degree(PA, 1.0) == pytest.approx(2.0)


@pytest.mark.parametrize("kind", ["factor", "pa"])
@pytest.mark.parametrize("g", [0.2, 0.5, 0.8])
def test_mean_degree_vs_quadrature(kind, g):
    k = KernelSpec(kind, g, 1.4)
    for x in np.geomspace(1e-6, 1, 13):
        assert mean_degree_quadrature(k, x) == pytest.approx(mean_degree(k, x), rel=1e-8)


# -- pi and T^loc

def test_pi_examples():
    assert pi_integral(mp(eta=0.0), 1.0) == pytest.approx(1.0, rel=1e-8)
    # int_0^1 y^-1/2 / (1 + y^1/2) dy = 2 ln 2 (substitute u = sqrt(y))
    assert pi_integral(mp(eta=-1.0), 1.0) == pytest.approx(2 * math.log(2), rel=1e-8)


def test_pi_against_direct_quadrature():
    from scipy.integrate import quad
    p = mp("pa", 0.3, eta=-0.6, kappa0=1.4)
    for x in (0.01, 0.2, 0.9):
        kx = kappa(p, x)
        f = lambda y: kernel_eval(p.kernel, x, y) / (kx + kappa(p, y))
        ref = quad(f, 0, x, limit=200, epsrel=1e-12)[0] + quad(f, x, 1, limit=200, epsrel=1e-12)[0]
        assert pi_integral(p, x) == pytest.approx(ref, rel=1e-7)


@pytest.mark.parametrize("kind", ["factor", "pa"])
def test_pi_eta_zero_is_half_mean_degree(kind):
    p = ModelParams.create(kind, gamma=0.35, eta=0.0, kappa0=1.7)
    for x in (1e-4, 0.03, 0.5, 1.0):
        assert pi_integral(p, x) == pytest.approx(mean_degree(p, x) / (2 * 1.7), rel=1e-8)


def test_pi_rejects_frozen_graph():
    with pytest.raises(DomainError):
        pi_integral(mp(kappa0=0.0), 0.5)


def test_t_loc_upper_examples():
    assert t_loc_upper(mp(eta=0.0, lam=0.1), 1.0) == 8.0
    p = mp(eta=-1.0, lam=0.5)
    x = 1e-4
    third = 16 * 0.25 * pi_integral(p, x) / kappa(p, x)
    assert third > 8
    assert t_loc_upper(p, x) == pytest.approx(third)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-6, 1.0), st.floats(-2.0, 0.5), st.floats(0.0, 2.0))
def test_t_loc_upper_is_max(x, eta, lam):
    p = mp(eta=eta, lam=lam)
    v = t_loc_upper(p, x)
    assert v >= 8.0
    assert v >= 8.0 / (3.0 * kappa(p, x)) * (1 - 1e-12)


def test_t_loc_lower_examples():
    assert t_loc_lower(mp(eta=-1.0, lam=0.1), 0.01) == pytest.approx(1.0)
    assert t_loc_lower(mp(eta=-1.0, lam=0.0), 0.01) == 0.0
    assert t_loc_lower(mp(eta=0.0, kappa0=2.0, lam=0.1), 0.01) == pytest.approx(0.05)


# -- thresholds

def test_thresholds_examples():
    th = thresholds(mp(eta=-1.0, lam=0.1))
    assert th.a_sl == pytest.approx(0.01)
    assert th.a_str == pytest.approx(0.04, rel=1e-9)
    assert th.a_ssl == min(th.a_sl, th.a_str)
    assert not th.all_quick


def test_thresholds_sentinel():
    th = thresholds(mp(eta=0.3, lam=0.1))
    assert th.all_quick and th.a_sl == 0.0 and th.a_ssl == 0.0


def test_thresholds_warns_when_lambda_exceeds_kappa0():
    with pytest.warns(RuntimeWarning):
        thresholds(mp(eta=0.3, lam=2.0))


def test_thresholds_clamps_to_one():
    assert thresholds(mp(lam=10.0, eta=-1.0)).a_str == 1.0


def test_thresholds_need_lambda():
    with pytest.raises(DomainError):
        thresholds(mp(lam=0.0))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["factor", "pa"]), st.floats(0.1, 0.9), st.floats(0.005, 0.2),
       st.floats(-2.0, -0.1))
def test_threshold_consistency(kind, g, lam, eta):
    p = ModelParams.create(kind, gamma=g, lam=lam, eta=eta, n=10_000)
    th = thresholds(p)
    if th.a_str < 1.0:
        assert mean_degree(p, th.a_str) == pytest.approx(1 / (10 * lam ** 2), rel=1e-6)
    if th.a_sl < 1.0:
        i = max(1, math.ceil(th.a_sl * p.n))
        lo = update_rate(p, max(1, i - 1))
        hi = update_rate(p, min(p.n, i + 1))
        assert min(lo, hi) * (1 - 1e-9) <= lam <= max(lo, hi) * (1 + 1e-9) or i == 1


# -- condp

def test_condp_examples():
    c1, c2 = validate_condp(FACTOR)
    assert c1 == 1.0 and c2 == pytest.approx(2.0 * 1.1)
    c1, c2 = validate_condp(PA)
    assert c1 == 1.0 and c2 == pytest.approx(4.0 * 1.1)
    assert kernel_eval(FACTOR, 1.0, 1.0) == condp_constants(FACTOR)[0]


@pytest.mark.parametrize("kind", ["factor", "pa"])
@pytest.mark.parametrize("g", [0.1, 0.5, 0.9])
def test_condp_passes(kind, g):
    validate_condp(KernelSpec(kind, g, 2.0))
