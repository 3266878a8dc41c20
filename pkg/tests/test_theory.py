import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evosis import theory as T
from evosis.errors import DomainError, FeasibilityError, RegimeError
from evosis.params import ModelParams
from evosis.theory import RegimeKind as R
from evosis.theory import Strategy as S


# -- regimes

@pytest.mark.parametrize("kind,tau,eta,expect", [
    ("factor", 5.5, -1.0, R.FAST),
    ("factor", 2.4, -1.0, R.SLOW),
    ("pa", 3.5, 0.7, R.ULTRA_FAST),
    ("factor", 3.5, 0.7, R.ULTRA_FAST),
    ("factor", 3.5, 0.3, R.FAST),      # tau > 4 - 2 eta = 3.4
    ("factor", 3.3, 0.3, R.SLOW),
    ("pa", 2.8, 0.7, R.SLOW),          # eta >= 1/2 but tau < 3
    ("pa", 5.0, -1.0, R.SLOW),         # PA has no fast regime
    ("factor", 5.0, -1.0, R.BOUNDARY),  # tau = 4 - eta
    ("factor", 3.0, 0.8, R.BOUNDARY),  # tau = 3
    ("pa", 3.0, 0.6, R.BOUNDARY),
])
def test_classify_regime(kind, tau, eta, expect):
    assert T.classify_regime(kind, tau, eta).kind is expect


def test_classify_regime_domain():
    with pytest.raises(DomainError):
        T.classify_regime("factor", 2.0, 0.0)


@settings(max_examples=300)
@given(st.sampled_from(["factor", "pa"]), st.floats(2.001, 6.0), st.floats(-3.0, 3.0))
def test_regime_partition(kind, tau, eta):
    reg = T.classify_regime(kind, tau, eta)
    if reg.is_slow:
        T.exponent_closed_form(kind, tau, eta)
    else:
        with pytest.raises(RegimeError):
            T.exponent_closed_form(kind, tau, eta)
        with pytest.raises(RegimeError):
            T.exponent_via_strategies(kind, tau, eta)


# -- closed form

@pytest.mark.parametrize("kind,tau,eta,xi", [
    ("factor", 2.4, -1.0, 1 / 0.6),
    ("factor", 2.8, -1.0, 2.6),
    ("factor", 3.5, -0.25, 7.0),
    ("pa", 3.0, -0.3, 4.3 / 1.3),
    ("pa", 2.5, 1.0, 3.0),
    ("factor", 3.75, -0.25, 15.0),  # branch 5 and 6 meet at tau = 4 + eta
    ("pa", 2.6, 0.1, 3.0),  # (3 tau - 4 - 2 eta)/(4 - 2 eta - tau) = 3.6/1.2
])
def test_closed_form_values(kind, tau, eta, xi):
    assert T.exponent_closed_form(kind, tau, eta) == pytest.approx(xi, abs=1e-12)


def test_boundary_point_evaluates_both_branches():
    hits = T.applicable_branches("factor", 3.75, -0.25)
    labels = {h[0] for h in hits}
    assert {"tau/(4-tau)", "(3tau-4-eta)/(4-tau-eta)"} <= labels
    vals = [v for _, v, _ in hits]
    assert max(vals) - min(vals) < 1e-9


# -- strategies

def test_strategy_table_examples():
    rows = {r.strategy: r for r in T.strategy_table("factor", 2.4, -1.0)}
    assert rows[S.QUICK_DIRECT].exponent == pytest.approx(1 / 0.6) and rows[S.QUICK_DIRECT].feasible
    rows = {r.strategy: r for r in T.strategy_table("factor", 3.5, -0.25)}
    assert rows[S.DELAYED_DEPLETED_DIRECT].exponent == pytest.approx(7.0)
    assert rows[S.DELAYED_DEPLETED_DIRECT].feasible


@settings(max_examples=100)
@given(st.floats(2.01, 6.0), st.floats(-3.0, 3.0))
def test_pa_has_no_quick_direct(tau, eta):
    assert S.QUICK_DIRECT not in {r.strategy for r in T.strategy_table("pa", tau, eta)}


@pytest.mark.parametrize("kind,tau,eta,xi,strat", [
    ("factor", 2.4, -1.0, 1 / 0.6, S.QUICK_DIRECT),
    ("factor", 2.8, -1.0, 2.6, S.LOCAL_SURVIVAL),
    ("pa", 2.6, 0.1, 3.0, S.DELAYED_INDIRECT),
])
def test_exponent_via_strategies(kind, tau, eta, xi, strat):
    v, s = T.exponent_via_strategies(kind, tau, eta)
    assert v == pytest.approx(xi, abs=1e-12)
    assert s is strat


@settings(max_examples=400)
@given(st.sampled_from(["factor", "pa"]), st.floats(2.001, 6.0), st.floats(-3.0, 3.0))
def test_strategies_match_closed_form(kind, tau, eta):
    if not T.classify_regime(kind, tau, eta).is_slow:
        return
    cf = T.exponent_closed_form(kind, tau, eta)
    sv, _ = T.exponent_via_strategies(kind, tau, eta)
    assert abs(cf - sv) <= 1e-9 * max(1.0, cf)


def test_branch_uniqueness_off_boundaries():
    for kind in ("factor", "pa"):
        for tau in np.linspace(2.01, 6.0, 80):
            for eta in np.linspace(-3.0, 3.0, 80):
                if not T.classify_regime(kind, tau, eta).is_slow:
                    continue
                hits = T.applicable_branches(kind, tau, eta)
                interior = [h for h in hits if h[2]]
                assert len(interior) <= 1
                if len(hits) > 1:
                    finite = [v for _, v, _ in hits if math.isfinite(v)]
                    assert max(finite) - min(finite) <= 1e-9 * max(1.0, max(finite))


# -- optimal a

def test_optimal_a_examples():
    a = T.optimal_a(S.QUICK_DIRECT, "factor", 0.75, -1.0, 0.1)
    assert a.a == pytest.approx(0.01) and a.a_exponent == pytest.approx(2.0)
    a = T.optimal_a(S.LOCAL_SURVIVAL, "factor", 0.5, -1.0, 0.1)
    assert a.a == pytest.approx(1e-4)
    a = T.optimal_a(S.DELAYED_INDIRECT, "factor", 0.5, -1.0, 0.1)
    assert a.a == pytest.approx(1e-4)
    assert a.cond_i


def test_optimal_a_infeasible():
    with pytest.raises(FeasibilityError):
        T.optimal_a(S.QUICK_DIRECT, "factor", 0.25, -1.0, 0.1)  # tau = 5
    with pytest.raises(FeasibilityError):
        T.optimal_a(S.QUICK_DIRECT, "pa", 0.75, -1.0, 0.1)


def test_optimal_a_constant_scales():
    a1 = T.optimal_a(S.LOCAL_SURVIVAL, "factor", 0.5, -1.0, 0.1)
    a2 = T.optimal_a(S.LOCAL_SURVIVAL, "factor", 0.5, -1.0, 0.1, constant=0.5)
    assert a2.a == pytest.approx(a1.a / 2)


def test_density_exponent_identity():
    # every feasible row satisfies exponent = 1 + (1 - gamma) * a_exponent
    for kind in ("factor", "pa"):
        for tau, eta in [(2.4, -1.0), (2.8, -0.3), (3.5, -0.25), (2.6, 0.1), (3.2, 0.2)]:
            g = 1 / (tau - 1)
            for r in T.strategy_table(kind, tau, eta):
                if r.feasible:
                    assert r.exponent == pytest.approx(1 + (1 - g) * r.a_exponent, rel=1e-12)


# -- reports and grids

def test_theory_report_json_keys():
    d = T.theory_report("factor", 2.4, -1.0).to_dict()
    assert set(d) == {"kernel", "tau", "eta", "regime", "xi", "dominating_strategy",
                      "a_exponent", "strategy_table"}
    assert d["xi"] == pytest.approx(1.6667, abs=1e-4)
    assert d["dominating_strategy"] == "QuickDirect"
    assert T.theory_report("factor", 5.5, -1.0).xi is None


def test_phase_grid_skips_tau_le_2():
    pts = T.phase_grid("pa", [2.0, 2.5, 3.5], [0.0, 0.7])
    assert {p.tau for p in pts} == {2.5, 3.5}
    by = {(p.tau, p.eta): p for p in pts}
    assert by[(3.5, 0.7)].regime.kind is R.ULTRA_FAST and by[(3.5, 0.7)].xi is None
    assert by[(2.5, 0.0)].xi is not None


# -- tabulated scores

def test_tabulated_score_validation():
    with pytest.raises(DomainError):
        T.TabulatedScore([0.1, 0.5, 1.0], [1.0, 2.0, 1.0])  # increasing
    with pytest.raises(DomainError):
        T.TabulatedScore([0.1, 0.5, 0.9], [3.0, 2.0, 1.0])  # does not end at 1
    with pytest.raises(DomainError):
        T.TabulatedScore([0.1, 1.0], [1.0, 0.0])


def test_tabulated_score_power_law_exact():
    x = np.geomspace(1e-6, 1, 50)
    s = T.TabulatedScore(x, x ** -0.4)
    y = np.array([3e-6, 0.0123, 0.77, 1e-8])
    assert s(y) == pytest.approx(y ** -0.4, rel=1e-12)


# -- master inequalities

def mp(**kw):
    return ModelParams.create("factor", gamma=0.25, n=1, eta=-0.5, **kw)


def test_upper_density_bound_examples():
    one = T.TabulatedScore(np.geomspace(1e-3, 1, 64), np.ones(64))
    assert T.upper_density_bound(None, 0.5, one) == pytest.approx(0.5 + 7 / 12)
    x = np.geomspace(1e-4, 1, 512)
    s = T.TabulatedScore(x, x ** -0.5)
    assert T.upper_density_bound(None, 0.01, s) == pytest.approx(0.22, rel=1e-8)
    assert T.upper_density_bound(None, 1.0, s) == 1.0
    assert T.upper_density_bound(None, 1 - 1e-9, s) == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("variant", [v for v in T.Variant if v is not T.Variant.DA_FACTOR])
def test_zero_lambda_trivially_satisfied(variant):
    one = T.TabulatedScore(np.geomspace(1e-6, 1, 512), np.ones(512))
    rep = T.check_master_inequality(variant, mp(lam=0.0), 0.0, one)
    assert rep.satisfied and rep.lhs_max_ratio == 0.0


def test_d_a_closed_form_constant_score():
    one = T.TabulatedScore(np.geomspace(1e-6, 1, 64), np.ones(64))
    p = mp(lam=0.01)
    d = T.check_master_inequality("Da_factor", p, 0.0, one).lhs_max_ratio
    assert d == pytest.approx(8 * 0.01 / 0.75, rel=1e-10)


def test_d_a_power_law_score():
    # s(y) = y^-1/4: D_0 = 8 lam int y^-1/2 dy = 16 lam; D_a adds the flat part below a
    x = np.geomspace(1e-10, 1, 300)
    s = T.TabulatedScore(x, x ** -0.25)
    p = mp(lam=0.01)
    assert T.d_a_factor(p, 0.0, s) == pytest.approx(0.16, rel=1e-9)
    a = 0.01
    exact = 8 * 0.01 * (a ** -0.25 * a ** 0.75 / 0.75 + 2 * (1 - a ** 0.5))
    assert T.d_a_factor(p, a, s) == pytest.approx(exact, rel=1e-9)


def test_imi_quick_against_direct_quadrature():
    from scipy.integrate import quad
    from evosis.params import t_loc_upper, kernel_eval
    p = ModelParams.create("pa", gamma=0.4, n=1, eta=0.2, lam=0.05)
    x = np.geomspace(1e-5, 1, 200)
    s = T.TabulatedScore(x, x ** -0.3)
    a = 1e-3
    rep = T.check_master_inequality("IMI_quick", p, a, s)
    xw = rep.worst_x
    f = lambda y: p.lam * kernel_eval(p.kernel, xw, y) * s(max(y, a))
    lhs = 7 * t_loc_upper(p, xw) * (quad(f, 0, a, points=[], limit=200)[0]
                                     + quad(f, a, xw, limit=200)[0] + quad(f, xw, 1, limit=200)[0])
    assert rep.lhs_max_ratio == pytest.approx(lhs / s(xw), rel=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 50.0), st.sampled_from(list(T.Variant)))
def test_ratio_invariance_under_score_scaling(c, variant):
    p = ModelParams.create("factor", gamma=0.4, n=1, eta=-0.5, lam=0.02)
    x = np.geomspace(1e-8, 1, 128)
    s = T.TabulatedScore(x, 2 * x ** -0.3)
    r1 = T.check_master_inequality(variant, p, 1e-4, s)
    r2 = T.check_master_inequality(variant, p, 1e-4, s.scaled(c))
    if variant is T.Variant.DA_FACTOR:
        assert r2.lhs_max_ratio == pytest.approx(c * r1.lhs_max_ratio, rel=1e-9)
    else:
        assert r2.lhs_max_ratio == pytest.approx(r1.lhs_max_ratio, rel=1e-9)
        # doubling the constant never turns a violation into success and vice versa
        r3 = T.check_master_inequality(variant, p, 1e-4, s.scaled(c),
                                       constant=(7.0 if "IMI" in variant.value else 1.0) * 2)
        assert r3.lhs_max_ratio == pytest.approx(2 * r1.lhs_max_ratio, rel=1e-9)


def test_imi_example_slow_region():
    lam = 0.01
    p = ModelParams.create("factor", tau=2.8, n=1, eta=-1.0, lam=lam)
    g = p.gamma
    a = lam ** (3 / (3 * g - 1 - g * p.eta))
    s = T.t_loc_score(p, n=512)
    rep = T.check_master_inequality("IMI_quick", p, a, s)
    assert rep.points_checked > 0 and math.isfinite(rep.lhs_max_ratio)
    assert rep.score_at_least_one
