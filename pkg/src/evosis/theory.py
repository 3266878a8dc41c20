"""Closed-form phase theory and a numerical master-inequality checker.

Exponents are exponents of ``lambda`` in the metastable density as
``lambda -> 0``. Every strategy yields a density lower bound of the form
``lambda * a**(1-gamma)`` with ``a = C * lambda**e``, so its exponent is
``1 + (1-gamma)*e``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import params as P
from .errors import CoverageError, DomainError, FeasibilityError, RegimeError
from .params import KernelKind, KernelSpec, ModelParams

TOL = 1e-12
AGREE_TOL = 1e-9


# --------------------------------------------------------------------------
# Regimes


class RegimeKind(enum.Enum):
    ULTRA_FAST = "UltraFast"
    FAST = "Fast"
    SLOW = "SlowMetastable"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    description: str = ""

    @property
    def is_slow(self) -> bool:
        return self.kind is RegimeKind.SLOW

    def __str__(self) -> str:
        if self.kind is RegimeKind.BOUNDARY:
            return f"Boundary({self.description})"
        return self.kind.value


def _check_tau(tau: float) -> None:
    if not (tau > 2.0) or not math.isfinite(tau):
        raise DomainError(f"tau must exceed 2, got {tau}")


def classify_regime(kind, tau: float, eta: float, tol: float = TOL) -> Regime:
    """Extinction regime of the process for kernel ``kind`` at ``(tau, eta)``.

    Points within ``tol`` of a phase boundary are reported as Boundary.
    """
    kind = KernelKind.parse(kind)
    tau, eta = float(tau), float(eta)
    _check_tau(tau)
    if not math.isfinite(eta):
        raise DomainError("eta must be finite")
    if abs(tau - 3.0) <= tol and eta >= 0.5 - tol:
        return Regime(RegimeKind.BOUNDARY, "tau=3, eta>=1/2")
    if kind is KernelKind.FACTOR:
        if eta <= tol and abs(tau - (4.0 - eta)) <= tol:
            return Regime(RegimeKind.BOUNDARY, "tau=4-eta")
        if -tol <= eta <= 0.5 + tol and abs(tau - (4.0 - 2.0 * eta)) <= tol:
            return Regime(RegimeKind.BOUNDARY, "tau=4-2eta")
        if abs(eta - 0.5) <= tol and tau > 3.0:
            return Regime(RegimeKind.BOUNDARY, "eta=1/2, tau>3")
        if eta > 0.5 and tau > 3.0:
            return Regime(RegimeKind.ULTRA_FAST)
        if (eta <= 0.0 and tau > 4.0 - eta) or (0.0 <= eta <= 0.5 and tau > 4.0 - 2.0 * eta):
            return Regime(RegimeKind.FAST)
        return Regime(RegimeKind.SLOW)
    if abs(eta - 0.5) <= tol and tau > 3.0:
        return Regime(RegimeKind.BOUNDARY, "eta=1/2, tau>3")
    if eta >= 0.5 and tau > 3.0:
        return Regime(RegimeKind.ULTRA_FAST)
    return Regime(RegimeKind.SLOW)


# --------------------------------------------------------------------------
# Closed-form exponent
#
# A region is a union of conjunctions of constraints g(tau, eta) >= 0 (or > 0
# when strict). Closure membership tolerates -tol; interior requires > tol.


@dataclass(frozen=True)
class _Branch:
    label: str
    value: Callable[[float, float], float]
    region: tuple  # tuple of tuples of (g, strict)


def _le(f: Callable, strict: bool = False):
    """Constraint ``f(tau, eta) <= 0`` expressed as ``-f >= 0``."""
    return (lambda t, e: -f(t, e), strict)


def _in_closure(region, t, e, tol=TOL) -> bool:
    return any(all(g(t, e) >= -tol for g, _ in conj) for conj in region)


def _in_interior(region, t, e, tol=TOL) -> bool:
    return any(all(g(t, e) > tol for g, _ in conj) for conj in region)


def _near_boundary(region, t, e, tol=TOL) -> bool:
    return any(abs(g(t, e)) <= tol for conj in region for g, _ in conj)


_FACTOR_BRANCHES = (
    _Branch("1/(3-tau)", lambda t, e: 1.0 / (3.0 - t), (
        (_le(lambda t, e: e), _le(lambda t, e: t - 2.5)),
        (_le(lambda t, e: -e), _le(lambda t, e: e - 0.5), _le(lambda t, e: t - 2.5 - e)),
        (_le(lambda t, e: 0.5 - e), _le(lambda t, e: t - 3.0, True)),
    )),
    _Branch("2tau-3", lambda t, e: 2.0 * t - 3.0, (
        (_le(lambda t, e: e - 2.5 + t), _le(lambda t, e: 2.5 - t), _le(lambda t, e: t - 3.0)),
        (_le(lambda t, e: e - 2.0 + t), _le(lambda t, e: 3.0 - t)),
    )),
    _Branch("(2tau-2-eta)/(4-eta-tau)", lambda t, e: (2 * t - 2 - e) / (4 - e - t), (
        (_le(lambda t, e: e), _le(lambda t, e: 2.5 - e - t), _le(lambda t, e: t - 4 - 2 * e, True)),
    )),
    _Branch("(2tau-2-2eta)/(4-2eta-tau)", lambda t, e: (2 * t - 2 - 2 * e) / (4 - 2 * e - t), (
        (_le(lambda t, e: -e), _le(lambda t, e: e - 0.5), _le(lambda t, e: 2.5 + e - t),
         _le(lambda t, e: t - 4 + 2 * e, True)),
    )),
    _Branch("tau/(4-tau)", lambda t, e: t / (4 - t), (
        (_le(lambda t, e: 3.0 - t), _le(lambda t, e: 4 + 2 * e - t), _le(lambda t, e: t - 4 - e)),
    )),
    _Branch("(3tau-4-eta)/(4-tau-eta)", lambda t, e: (3 * t - 4 - e) / (4 - t - e), (
        (_le(lambda t, e: 2 - e - t), _le(lambda t, e: 4 + e - t), _le(lambda t, e: t - 4 + e, True)),
    )),
)

_PA_BRANCHES = (
    _Branch("2tau-3", lambda t, e: 2.0 * t - 3.0, (
        (_le(lambda t, e: e + 0.5),),
        (_le(lambda t, e: -0.5 - e), _le(lambda t, e: e), _le(lambda t, e: t - 2 + e)),
    )),
    _Branch("(3tau-4-eta)/(4-eta-tau)", lambda t, e: (3 * t - 4 - e) / (4 - e - t), (
        (_le(lambda t, e: -0.5 - e, True), _le(lambda t, e: e), _le(lambda t, e: 2 - e - t),
         _le(lambda t, e: t - 8 / 3 - e / 3)),
    )),
    _Branch("(3tau-5-eta)/(1-eta)", lambda t, e: (3 * t - 5 - e) / (1 - e), (
        (_le(lambda t, e: -0.5 - e, True), _le(lambda t, e: e), _le(lambda t, e: 8 / 3 + e / 3 - t)),
    )),
    _Branch("(3tau-4-2eta)/(4-2eta-tau)", lambda t, e: (3 * t - 4 - 2 * e) / (4 - 2 * e - t), (
        (_le(lambda t, e: -e), _le(lambda t, e: e - 0.5), _le(lambda t, e: 2 + 2 * e - t),
         _le(lambda t, e: t - 8 / 3 - 2 * e / 3)),
    )),
    _Branch("(3tau-5-2eta)/(1-2eta)", lambda t, e: (3 * t - 5 - 2 * e) / (1 - 2 * e), (
        (_le(lambda t, e: -e), _le(lambda t, e: e - 0.5), _le(lambda t, e: 8 / 3 + 2 * e / 3 - t)),
    )),
    _Branch("(tau-1)/(3-tau)", lambda t, e: (t - 1) / (3 - t), (
        (_le(lambda t, e: t - 3, True), _le(lambda t, e: t / 2 - 1 - e, True)),
    )),
)


def _branches(kind: KernelKind):
    return _FACTOR_BRANCHES if kind is KernelKind.FACTOR else _PA_BRANCHES


def _safe_value(fn, t, e) -> float:
    try:
        v = fn(float(t), float(e))
    except ZeroDivisionError:
        return math.inf
    return v if math.isfinite(v) else math.inf


def applicable_branches(kind, tau: float, eta: float, tol: float = TOL) -> list[tuple[str, float, bool]]:
    """Branches whose closed region contains the point, as ``(label, value, interior)``."""
    kind = KernelKind.parse(kind)
    tau, eta = float(tau), float(eta)
    out = []
    for b in _branches(kind):
        if _in_closure(b.region, tau, eta, tol):
            out.append((b.label, _safe_value(b.value, tau, eta), _in_interior(b.region, tau, eta, tol)))
    return out


def exponent_closed_form(kind, tau: float, eta: float) -> float:
    """Metastable exponent from the piecewise closed form.

    On branch boundaries all applicable branches are evaluated and must agree.
    """
    kind = KernelKind.parse(kind)
    regime = classify_regime(kind, tau, eta)
    if not regime.is_slow:
        raise RegimeError(f"exponent defined only in the slow regime, got {regime}")
    hits = [(lab, v) for lab, v, _ in applicable_branches(kind, tau, eta) if math.isfinite(v)]
    if not hits:
        raise CoverageError(f"no branch covers {kind.value} tau={tau} eta={eta}")
    ref = hits[0][1]
    for lab, v in hits[1:]:
        if abs(v - ref) > AGREE_TOL * max(1.0, abs(ref)):
            raise CoverageError(
                f"branches disagree at tau={tau} eta={eta}: {hits[0][0]}={ref} vs {lab}={v}")
    return ref


# --------------------------------------------------------------------------
# Strategies


class Strategy(enum.Enum):
    QUICK_DIRECT = "QuickDirect"
    QUICK_INDIRECT = "QuickIndirect"
    LOCAL_SURVIVAL = "LocalSurvival"
    DELAYED_DIRECT = "DelayedDirect"
    DELAYED_DEPLETED_DIRECT = "DelayedDepletedDirect"
    DELAYED_INDIRECT = "DelayedIndirect"


@dataclass(frozen=True)
class StrategyRow:
    strategy: Strategy
    exponent: float
    feasible: bool
    region: str
    a_exponent: float

    def to_dict(self) -> dict:
        return {"strategy": self.strategy.value,
                "exponent": self.exponent if math.isfinite(self.exponent) else None,
                "feasible": self.feasible, "region": self.region,
                "a_exponent": self.a_exponent if math.isfinite(self.a_exponent) else None}


@dataclass(frozen=True)
class _Rule:
    strategy: Strategy
    exponent: Callable[[float, float], float]
    a_exponent: Callable[[float, float], float]  # in terms of (gamma, eta)
    region: tuple
    region_text: str


_S = Strategy

# eta < 0, factor kernel.
_FACTOR_NEG = (
    _Rule(_S.QUICK_DIRECT, lambda t, e: 1 / (3 - t), lambda g, e: 1 / (2 * g - 1),
          ((_le(lambda t, e: t - 3, True),),), "tau<3"),
    _Rule(_S.QUICK_INDIRECT, lambda t, e: (t - 1) / (3 - t), lambda g, e: 2 / (2 * g - 1),
          ((_le(lambda t, e: t - 3, True),),), "tau<3"),
    _Rule(_S.LOCAL_SURVIVAL, lambda t, e: 2 * t - 3, lambda g, e: 2 / g,
          ((_le(lambda t, e: t - 2.5 + e), _le(lambda t, e: t - 3)), (_le(lambda t, e: t - 2 + e),)),
          "tau<=min(5/2-eta,3) or tau<=2-eta"),
    _Rule(_S.DELAYED_DIRECT, lambda t, e: (2 * t - 2 - e) / (4 - t - e),
          lambda g, e: 3 / (3 * g - 1 - g * e),
          ((_le(lambda t, e: 2.5 - e - t, True), _le(lambda t, e: t - 4 - 2 * e)),),
          "5/2-eta<tau<=4+2eta"),
    _Rule(_S.DELAYED_DEPLETED_DIRECT, lambda t, e: t / (4 - t), lambda g, e: 2 / (3 * g - 1),
          ((_le(lambda t, e: 4 + 2 * e - t), _le(lambda t, e: 3 - t), _le(lambda t, e: t - 4, True)),),
          "max(4+2eta,3)<=tau<4"),
    _Rule(_S.DELAYED_INDIRECT, lambda t, e: (3 * t - 4 - e) / (4 - t - e),
          lambda g, e: 4 / (3 * g - 1 - g * e),
          ((_le(lambda t, e: 2 - e - t), _le(lambda t, e: t - 4 + e, True)),),
          "2-eta<=tau<4-eta"),
)

# eta >= 0, factor kernel: local survival time lambda^2 k^(1-2eta), no depletion.
_FACTOR_POS = (
    _FACTOR_NEG[0],
    _FACTOR_NEG[1],
    _Rule(_S.LOCAL_SURVIVAL, lambda t, e: 1 + 2 * (t - 2) / (1 - 2 * e),
          lambda g, e: 2 / (g * (1 - 2 * e)),
          ((_le(lambda t, e: e - 0.5, True), _le(lambda t, e: t - 2.5 - e)),),
          "eta<1/2 and tau<=5/2+eta"),
    _Rule(_S.DELAYED_DIRECT, lambda t, e: (2 * t - 2 - 2 * e) / (4 - t - 2 * e),
          lambda g, e: 3 / (3 * g - 1 - 2 * g * e),
          ((_le(lambda t, e: 2.5 + e - t, True), _le(lambda t, e: t - 4 + 2 * e, True)),),
          "5/2+eta<tau<4-2eta"),
    _Rule(_S.DELAYED_DEPLETED_DIRECT, lambda t, e: t / (4 - t), lambda g, e: 2 / (3 * g - 1),
          (((lambda t, e: -1.0, True),),), "infeasible for eta>=0"),
    _Rule(_S.DELAYED_INDIRECT, lambda t, e: (3 * t - 4 - 2 * e) / (4 - t - 2 * e),
          lambda g, e: 4 / (3 * g - 1 - 2 * g * e),
          ((_le(lambda t, e: 2 + 2 * e - t), _le(lambda t, e: t - 4 + 2 * e, True)),),
          "2+2eta<=tau<4-2eta"),
)

_PA_NEG = (
    _Rule(_S.QUICK_INDIRECT, lambda t, e: (t - 1) / (3 - t), lambda g, e: 2 / (2 * g - 1),
          ((_le(lambda t, e: t - 3, True),),), "tau<3"),
    _Rule(_S.LOCAL_SURVIVAL, lambda t, e: 2 * t - 3, lambda g, e: 2 / g,
          ((_le(lambda t, e: t - 2 + e),), (_le(lambda t, e: e + 0.5),)),
          "tau<=2-eta or eta<=-1/2"),
    _Rule(_S.DELAYED_DIRECT, lambda t, e: (3 * t - 5 - e) / (1 - e), lambda g, e: 3 / (g - g * e),
          ((_le(lambda t, e: -0.5 - e),),), "eta>=-1/2"),
    _Rule(_S.DELAYED_INDIRECT, lambda t, e: (3 * t - 4 - e) / (4 - t - e),
          lambda g, e: 4 / (3 * g - 1 - g * e),
          ((_le(lambda t, e: 2 - e - t), _le(lambda t, e: t - 4 + e, True)),),
          "2-eta<=tau<4-eta"),
)

_PA_POS = (
    _PA_NEG[0],
    _Rule(_S.LOCAL_SURVIVAL, lambda t, e: 1 + 2 * (t - 2) / (1 - 2 * e),
          lambda g, e: 2 / (g * (1 - 2 * e)),
          ((_le(lambda t, e: e - 0.5, True), _le(lambda t, e: t - 2 - 2 * e)),),
          "eta<1/2 and tau<=2+2eta"),
    _Rule(_S.DELAYED_DIRECT, lambda t, e: (3 * t - 5 - 2 * e) / (1 - 2 * e),
          lambda g, e: 3 / (g * (1 - 2 * e)),
          ((_le(lambda t, e: e - 0.5, True),),), "eta<1/2"),
    _Rule(_S.DELAYED_INDIRECT, lambda t, e: (3 * t - 4 - 2 * e) / (4 - t - 2 * e),
          lambda g, e: 4 / (3 * g - 1 - 2 * g * e),
          ((_le(lambda t, e: 2 + 2 * e - t), _le(lambda t, e: t - 4 + 2 * e, True)),),
          "2+2eta<=tau<4-2eta"),
)


def _rules(kind: KernelKind, eta: float):
    if kind is KernelKind.FACTOR:
        return _FACTOR_NEG if eta < 0 else _FACTOR_POS
    return _PA_NEG if eta < 0 else _PA_POS


def strategy_table(kind, tau: float, eta: float) -> list[StrategyRow]:
    """Per-strategy density exponent, feasibility and region description.

    Feasibility is closed-region membership with a finite positive exponent.
    Quick direct spreading is absent for the preferential attachment kernel.
    """
    kind = KernelKind.parse(kind)
    tau, eta = float(tau), float(eta)
    _check_tau(tau)
    gamma = P.gamma_from_tau(tau)
    rows = []
    for r in _rules(kind, eta):
        xi = _safe_value(r.exponent, tau, eta)
        ae = _safe_value(r.a_exponent, gamma, eta)
        ok = (_in_closure(r.region, tau, eta) and math.isfinite(xi) and xi > 0
              and math.isfinite(ae) and ae > 0)
        rows.append(StrategyRow(r.strategy, xi, ok, r.region_text, ae))
    return rows


def exponent_via_strategies(kind, tau: float, eta: float) -> tuple[float, Strategy]:
    """Smallest exponent over feasible strategies, with the strategy attaining it."""
    kind = KernelKind.parse(kind)
    regime = classify_regime(kind, tau, eta)
    if not regime.is_slow:
        raise RegimeError(f"exponent defined only in the slow regime, got {regime}")
    feas = [r for r in strategy_table(kind, tau, eta) if r.feasible]
    if not feas:
        raise CoverageError(f"no feasible strategy at {kind.value} tau={tau} eta={eta}")
    best = min(feas, key=lambda r: r.exponent)
    return best.exponent, best.strategy


# --------------------------------------------------------------------------
# Optimal star threshold


@dataclass(frozen=True)
class OptimalA:
    strategy: Strategy
    a: float
    a_exponent: float
    constant: float
    binding: str
    binding_lhs: float
    cond_i: bool   # p(a,1) <= exp(1/lambda)
    cond_ii: bool  # lambda^2 p(a,1) > -C log(a lambda)

    def to_dict(self) -> dict:
        return {"strategy": self.strategy.value, "a": self.a, "a_exponent": self.a_exponent,
                "constant": self.constant, "binding": self.binding,
                "binding_lhs": self.binding_lhs, "cond_i": self.cond_i, "cond_ii": self.cond_ii}


def optimal_a(strategy: Strategy, kind, gamma: float, eta: float, lam: float,
              constant: float = 1.0, c_theoslow: float = 1.0, kappa0: float = 1.0,
              beta: float = 1.0) -> OptimalA:
    """Star threshold ``a = constant * lam**e`` for a feasible strategy.

    Also evaluates the left side of the strategy's defining inequality at ``a``
    and two technical side conditions of delayed spreading.
    """
    kind = KernelKind.parse(kind)
    strategy = Strategy(strategy)
    tau = P.tau_from_gamma(gamma)
    if not (lam > 0):
        raise DomainError("lambda must be positive")
    row = next((r for r in strategy_table(kind, tau, eta) if r.strategy is strategy), None)
    if row is None or not row.feasible:
        raise FeasibilityError(f"{strategy.value} infeasible for {kind.value} tau={tau:.6g} eta={eta}")
    e = row.a_exponent
    a = constant * lam ** e
    if not (0.0 < a < 1.0):
        raise DomainError(f"a={a} outside (0,1); lambda too large for this constant")
    k = KernelSpec(kind, gamma, beta)
    p_a1 = P.kernel_eval(k, a, 1.0)
    p_aa = P.kernel_eval(k, a, a)
    ka = kappa0 * a ** (-gamma * eta)
    t_loc = lam ** 2 * p_a1 / ka
    if strategy is Strategy.QUICK_DIRECT:
        binding, lhs = "lambda*a*p(a,a) > M_i", lam * a * p_aa
    elif strategy is Strategy.QUICK_INDIRECT:
        binding, lhs = "lambda^2*a*p(a,1)^2 > M_ii", lam ** 2 * a * p_a1 ** 2
    elif strategy is Strategy.LOCAL_SURVIVAL:
        binding, lhs = "lambda^2*p(a,1) > -C*log(a*lambda)", lam ** 2 * p_a1
    elif strategy in (Strategy.DELAYED_DIRECT, Strategy.DELAYED_DEPLETED_DIRECT):
        binding, lhs = "(kappa(a)^lambda)*a*p(a,a)*T_loc > M_iii", min(ka, lam) * a * p_aa * t_loc
    else:
        binding, lhs = "lambda^2*a*p(a,1)^2*T_loc > M_iv", lam ** 2 * a * p_a1 ** 2 * t_loc
    cond_i = math.log(p_a1) <= 1.0 / lam
    cond_ii = lam ** 2 * p_a1 > -c_theoslow * math.log(a * lam)
    return OptimalA(strategy, a, e, constant, binding, lhs, cond_i, cond_ii)


# --------------------------------------------------------------------------
# Reports and phase grid


@dataclass(frozen=True)
class TheoryReport:
    kernel: KernelKind
    tau: float
    eta: float
    regime: Regime
    xi: float | None
    dominating: Strategy | None
    a_exponent: float | None
    table: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"kernel": self.kernel.value, "tau": self.tau, "eta": self.eta,
                "regime": str(self.regime), "xi": self.xi,
                "dominating_strategy": self.dominating.value if self.dominating else None,
                "a_exponent": self.a_exponent,
                "strategy_table": [r.to_dict() for r in self.table]}


def theory_report(kind, tau: float, eta: float) -> TheoryReport:
    kind = KernelKind.parse(kind)
    regime = classify_regime(kind, tau, eta)
    table = tuple(strategy_table(kind, tau, eta))
    if not regime.is_slow:
        return TheoryReport(kind, tau, eta, regime, None, None, None, table)
    xi = exponent_closed_form(kind, tau, eta)
    xs, strat = exponent_via_strategies(kind, tau, eta)
    if abs(xs - xi) > AGREE_TOL * max(1.0, xi):
        raise CoverageError(f"strategy minimum {xs} differs from closed form {xi}")
    a_exp = next(r.a_exponent for r in table if r.strategy is strat)
    return TheoryReport(kind, tau, eta, regime, xi, strat, a_exp, table)


@dataclass(frozen=True)
class PhasePoint:
    tau: float
    eta: float
    regime: Regime
    xi: float | None
    strategy: Strategy | None


def phase_grid(kind, taus: Sequence[float], etas: Sequence[float]) -> list[PhasePoint]:
    """Regime, exponent and dominating strategy on a grid; ``tau <= 2`` is skipped."""
    kind = KernelKind.parse(kind)
    out = []
    for t in taus:
        if not t > 2.0:
            continue
        for e in etas:
            reg = classify_regime(kind, t, e)
            if reg.is_slow:
                xi = exponent_closed_form(kind, t, e)
                xs, st = exponent_via_strategies(kind, t, e)
                if abs(xs - xi) > AGREE_TOL * max(1.0, xi):
                    raise CoverageError(f"mismatch at tau={t} eta={e}")
                out.append(PhasePoint(t, e, reg, xi, st))
            else:
                out.append(PhasePoint(t, e, reg, None, None))
    return out


# --------------------------------------------------------------------------
# Tabulated scores and master inequalities


class TabulatedScore:
    """Nonincreasing positive function tabulated on an increasing grid ending at 1.

    Between nodes it is interpolated linearly in log-log coordinates, so each
    cell is an exact power law. Below the first node the first cell's power law
    is extended.
    """

    def __init__(self, x, s):
        x = np.asarray(x, dtype=float)
        s = np.asarray(s, dtype=float)
        if x.ndim != 1 or x.shape != s.shape or x.size < 2:
            raise DomainError("score grid and values must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(x) <= 0) or x[0] <= 0 or abs(x[-1] - 1.0) > 1e-12:
            raise DomainError("score grid must be strictly increasing in (0,1] and end at 1")
        if np.any(~np.isfinite(s)) or np.any(s <= 0):
            raise DomainError("score values must be finite and positive")
        if np.any(np.diff(s) > 1e-12 * np.abs(s[1:])):
            raise DomainError("score must be nonincreasing (precondition)")
        self.x = x
        self.s = s
        self._lx = np.log(x)
        self._ls = np.log(s)
        self.alpha = np.diff(self._ls) / np.diff(self._lx)

    @classmethod
    def from_function(cls, f: Callable[[float], float], x_min: float, n: int = 1024):
        xs = np.geomspace(x_min, 1.0, n)
        xs[-1] = 1.0
        return cls(xs, np.array([f(float(v)) for v in xs]))

    def scaled(self, c: float) -> "TabulatedScore":
        return TabulatedScore(self.x, self.s * c)

    @property
    def at_least_one(self) -> bool:
        return bool(np.all(self.s >= 1.0))

    def _cell(self, y):
        return np.clip(np.searchsorted(self.x, y, side="right") - 1, 0, self.x.size - 2)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        j = self._cell(y)
        out = np.exp(self._ls[j] + self.alpha[j] * (np.log(y) - self._lx[j]))
        return float(out) if out.ndim == 0 else out

    def local_exponent(self, y):
        return self.alpha[self._cell(np.asarray(y, dtype=float))]


def _powerlaw_integral(breaks: np.ndarray, value_at, exponent_at) -> float:
    """Integrate a function that is a pure power law on each cell of ``breaks``.

    ``value_at(y)`` gives the integrand at the cell left ends and
    ``exponent_at(mid)`` its local exponent on each cell. A cell starting at 0
    uses the right end value instead.
    """
    u, v = breaks[:-1], breaks[1:]
    keep = v > u
    u, v = u[keep], v[keep]
    if u.size == 0:
        return 0.0
    mid = np.where(u > 0, np.sqrt(np.maximum(u, 1e-300) * v), 0.5 * v)
    rho = exponent_at(mid)
    total = 0.0
    zero = u == 0
    if np.any(zero):
        r1 = rho[zero] + 1.0
        if np.any(r1 <= 0):
            raise P.QuadratureError("integrand not integrable at 0")
        total += float(np.sum(value_at(v[zero], mid[zero]) * v[zero] / r1))
    pos = ~zero
    if np.any(pos):
        up, vp = u[pos], v[pos]
        L = np.log(vp / up)
        z = (rho[pos] + 1.0) * L
        with np.errstate(invalid="ignore", divide="ignore"):
            phi = np.where(np.abs(z) < 1e-12, 1.0 + z / 2, np.expm1(z) / np.where(z == 0, 1, z))
        total += float(np.sum(value_at(up, mid[pos]) * up * L * phi))
    return total


class _Integrand:
    """Product of power-law pieces used by the master inequalities."""

    def __init__(self, params: ModelParams, x: float, a: float, score: TabulatedScore,
                 weight: str, a_thr: float = 0.0):
        self.k = params.kernel
        self.p = params
        self.x = x
        self.a = a
        self.score = score
        self.weight = weight  # "lambda" or "kappa_max"
        self.a_thr = a_thr
        self.kx = params.kappa0 * x ** (-params.gamma * params.eta)
        self.sa = score(a) if a > 0 else None

    def _s_val(self, y, mid):
        if self.a > 0:
            return np.where(mid < self.a, self.sa, self.score(np.maximum(y, self.a)))
        return self.score(np.maximum(y, 1e-300))

    def _s_exp(self, mid):
        e = self.score.local_exponent(np.maximum(mid, 1e-300))
        return np.where(mid < self.a, 0.0, e) if self.a > 0 else e

    def _p_val(self, y, mid):
        g, b, x = self.k.gamma, self.k.beta, self.x
        y = np.maximum(y, 1e-300)
        if self.k.kind is KernelKind.FACTOR:
            return b * x ** (-g) * y ** (-g)
        return np.where(mid < x, b * x ** (g - 1) * y ** (-g), b * x ** (-g) * y ** (g - 1))

    def _p_exp(self, mid):
        g = self.k.gamma
        if self.k.kind is KernelKind.FACTOR:
            return np.full_like(mid, -g)
        return np.where(mid < self.x, -g, g - 1)

    def _w_val(self, y, mid):
        if self.weight == "lambda":
            return np.full_like(mid, self.p.lam)
        ky = self.p.kappa0 * np.maximum(y, 1e-300) ** (-self.p.gamma * self.p.eta)
        kmid = self.p.kappa0 * mid ** (-self.p.gamma * self.p.eta)
        return np.where(kmid > self.kx, ky, self.kx)

    def _w_exp(self, mid):
        if self.weight == "lambda":
            return np.zeros_like(mid)
        kmid = self.p.kappa0 * mid ** (-self.p.gamma * self.p.eta)
        return np.where(kmid > self.kx, -self.p.gamma * self.p.eta, 0.0)

    def integral(self, lo: float, hi: float) -> float:
        if hi <= lo:
            return 0.0
        pts = [lo, hi, self.a, self.x, self.a_thr]
        g = self.score.x
        inner = g[(g > lo) & (g < hi)]
        br = np.unique(np.concatenate([[p for p in pts if lo <= p <= hi], inner]))
        val = lambda y, mid: self._s_val(y, mid) * self._p_val(y, mid) * self._w_val(y, mid)
        ex = lambda mid: self._s_exp(mid) + self._p_exp(mid) + self._w_exp(mid)
        return _powerlaw_integral(br, val, ex)


class Variant(enum.Enum):
    IMI_QUICK = "IMI_quick"
    IMI_SLOW = "IMI_slow"
    OMI_WEAK = "OMI_weak"
    OMI_STRONG_QUICK = "OMI_strong_quick"
    OMI_STRONG_SLOW = "OMI_strong_slow"
    DA_FACTOR = "Da_factor"


@dataclass(frozen=True)
class InequalityReport:
    variant: Variant
    lhs_max_ratio: float
    satisfied: bool
    worst_x: float
    points_checked: int
    score_at_least_one: bool

    def to_dict(self) -> dict:
        return {"variant": self.variant.value, "lhs_max_ratio": self.lhs_max_ratio,
                "satisfied": self.satisfied, "worst_x": self.worst_x,
                "points_checked": self.points_checked,
                "score_at_least_one": self.score_at_least_one}


def d_a_factor(params: ModelParams, a: float, score: TabulatedScore) -> float:
    """``8 lam beta * int_0^1 y^-gamma s(a v y) dy`` for the factor kernel."""
    if params.kernel.kind is not KernelKind.FACTOR:
        raise DomainError("D_a is defined for the factor kernel")
    g = params.gamma
    sa = score(a) if a > 0 else None

    def val(y, mid):
        yy = np.maximum(y, 1e-300)
        s = score(np.maximum(yy, a)) if a > 0 else score(yy)
        if a > 0:
            s = np.where(mid < a, sa, s)
        return yy ** (-g) * s

    def ex(mid):
        e = score.local_exponent(mid)
        if a > 0:
            e = np.where(mid < a, 0.0, e)
        return e - g

    br = np.unique(np.concatenate([[0.0, 1.0] + ([a] if a > 0 else []),
                                   score.x[(score.x > 0) & (score.x < 1)]]))
    return 8.0 * params.lam * params.kernel.beta * _powerlaw_integral(br, val, ex)


def check_master_inequality(variant, params: ModelParams, a: float, score: TabulatedScore,
                            constant: float | None = None,
                            t_loc: Callable[[float], float] | None = None) -> InequalityReport:
    """Evaluate a master inequality at every score grid point of its vertex class.

    ``constant`` defaults to 7 for the IMI variants and 1 for the OMI variants.
    ``t_loc`` overrides the per-vertex local time (defaults to ``t_loc_upper``).
    """
    variant = Variant(variant)
    if not (0.0 <= a < 1.0):
        raise DomainError("a must lie in [0,1)")
    if variant is Variant.DA_FACTOR:
        d = d_a_factor(params, a, score)
        return InequalityReport(variant, d, bool(d <= 1.0), math.nan, 0, score.at_least_one)
    if constant is None:
        constant = 7.0 if variant in (Variant.IMI_QUICK, Variant.IMI_SLOW) else 1.0
    tl = t_loc or (lambda x: P.t_loc_upper(params, x))
    if params.lam > 0:
        th = P.thresholds(params)
    else:
        th = P.ThresholdSet(0.0, 0.0, 0.0, True)
    xs = score.x[score.x > a] if a > 0 else score.x

    if variant is Variant.IMI_QUICK:
        sel = xs if th.all_quick else xs[xs >= th.a_sl]
        thr, slow = 0.0, False
    elif variant is Variant.IMI_SLOW:
        sel = xs[:0] if th.all_quick else xs[xs < th.a_sl]
        thr, slow = th.a_sl, True
    elif variant is Variant.OMI_WEAK:
        sel = xs[xs >= th.a_str]
        thr, slow = 0.0, False
    elif variant is Variant.OMI_STRONG_QUICK:
        sel = xs[(xs >= th.a_ssl) & (xs < th.a_str)]
        thr, slow = 0.0, False
    else:
        sel = xs[xs < th.a_ssl]
        thr, slow = th.a_ssl, True

    use_tloc = variant is not Variant.OMI_WEAK
    worst, worst_x = 0.0, math.nan
    for x in sel:
        x = float(x)
        if params.lam == 0 and not slow:
            lhs = 0.0
        elif slow:
            lhs = (_Integrand(params, x, a, score, "kappa_max", thr).integral(0.0, thr)
                   + _Integrand(params, x, a, score, "lambda", thr).integral(thr, 1.0))
        else:
            lhs = _Integrand(params, x, a, score, "lambda").integral(0.0, 1.0)
        if use_tloc and lhs > 0:
            lhs *= tl(x)
        ratio = constant * lhs / float(score(x))
        if ratio > worst or math.isnan(worst_x):
            worst, worst_x = ratio, x
    return InequalityReport(variant, worst, bool(worst <= 1.0), worst_x, int(sel.size),
                            score.at_least_one)


def upper_density_bound(params: ModelParams | None, a: float, score: TabulatedScore) -> float:
    """``a + 7/(6 s(a)) * int_a^1 s(y) dy``."""
    if not (0.0 < a <= 1.0):
        raise DomainError("a must lie in (0,1]")
    if a == 1.0:
        return 1.0
    g = score.x
    br = np.unique(np.concatenate([[a, 1.0], g[(g > a) & (g < 1.0)]]))
    integral = _powerlaw_integral(br, lambda y, mid: score(y), score.local_exponent)
    return a + 7.0 / (6.0 * float(score(a))) * integral


def t_loc_score(params: ModelParams, x_min: float = 1e-12, n: int = 1024) -> TabulatedScore:
    """Tabulate ``s(x) = T^loc(x) x^-gamma``."""
    g = params.gamma
    return TabulatedScore.from_function(lambda x: P.t_loc_upper(params, x) * x ** (-g), x_min, n)
