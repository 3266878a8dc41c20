"""Model parameters, kernels, rate functions, integrals and vertex-class thresholds.

Vertices are indexed ``1..N`` and vertex ``i`` has rank ``x = i/N``. Two vertices
are joined with probability ``min(p(i/N, j/N)/N, 1)``. A vertex of rank ``x``
updates (drops and resamples all incident edges) at rate ``kappa0 * x**(-gamma*eta)``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import CondpValidationError, DomainError, QuadratureError

QUAD_EPSREL = 1e-10
CONDP_MARGIN = 0.10


class KernelKind(enum.Enum):
    FACTOR = "factor"
    PREF_ATTACH = "pa"

    @classmethod
    def parse(cls, value: "str | KernelKind") -> "KernelKind":
        if isinstance(value, KernelKind):
            return value
        key = str(value).strip().lower()
        aliases = {"factor": cls.FACTOR, "pa": cls.PREF_ATTACH,
                   "prefattach": cls.PREF_ATTACH, "pref_attach": cls.PREF_ATTACH,
                   "preferential": cls.PREF_ATTACH}
        if key not in aliases:
            raise DomainError(f"unknown kernel kind {value!r}")
        return aliases[key]


def tau_from_gamma(gamma: float) -> float:
    """Power-law exponent of the degree distribution, ``tau = 1 + 1/gamma``."""
    if not (0.0 < gamma < 1.0) or not math.isfinite(gamma):
        raise DomainError(f"gamma must lie in (0,1), got {gamma}")
    return 1.0 + 1.0 / gamma


def gamma_from_tau(tau: float) -> float:
    """Inverse of :func:`tau_from_gamma`."""
    if not (tau > 2.0) or not math.isfinite(tau):
        raise DomainError(f"tau must exceed 2, got {tau}")
    return 1.0 / (tau - 1.0)


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    gamma: float
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind.parse(self.kind))
        if not (0.0 < self.gamma < 1.0):
            raise DomainError(f"gamma must lie in (0,1), got {self.gamma}")
        if not (self.beta > 0.0) or not math.isfinite(self.beta):
            raise DomainError(f"beta must be positive, got {self.beta}")

    @property
    def tau(self) -> float:
        return tau_from_gamma(self.gamma)


@dataclass(frozen=True)
class ModelParams:
    """Full parameterisation of the evolving network and the infection.

    ``kappa0 = 0`` is accepted and freezes the graph (no updates). The
    analytic quantities that divide by the update rate reject it.
    """

    n: int
    kernel: KernelSpec
    eta: float
    kappa0: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if not math.isfinite(self.eta):
            raise DomainError("eta must be finite")
        if not (self.kappa0 >= 0.0) or not math.isfinite(self.kappa0):
            raise DomainError(f"kappa0 must be nonnegative, got {self.kappa0}")
        if not (self.lam >= 0.0) or not math.isfinite(self.lam):
            raise DomainError(f"lambda must be nonnegative, got {self.lam}")
        if not self.finite_workload:
            warnings.warn(
                "gamma*(1+eta) >= 1: the update workload per unit time grows "
                "without bound as N increases", RuntimeWarning, stacklevel=3)

    @classmethod
    def create(cls, kind="factor", *, gamma=None, tau=None, beta=1.0, n=1000,
               eta=0.0, kappa0=1.0, lam=0.0) -> "ModelParams":
        """Build from either ``gamma`` or ``tau`` (exactly one)."""
        if (gamma is None) == (tau is None):
            raise DomainError("exactly one of gamma and tau must be given")
        g = gamma if gamma is not None else gamma_from_tau(tau)
        return cls(n=n, kernel=KernelSpec(KernelKind.parse(kind), g, beta),
                   eta=eta, kappa0=kappa0, lam=lam)

    @property
    def gamma(self) -> float:
        return self.kernel.gamma

    @property
    def tau(self) -> float:
        return self.kernel.tau

    @property
    def finite_workload(self) -> bool:
        return not (self.eta > 0 and self.gamma * (1.0 + self.eta) >= 1.0)

    def with_lambda(self, lam: float) -> "ModelParams":
        return ModelParams(self.n, self.kernel, self.eta, self.kappa0, lam)

    def with_n(self, n: int) -> "ModelParams":
        return ModelParams(n, self.kernel, self.eta, self.kappa0, self.lam)

    def to_dict(self) -> dict:
        return {"kernel": self.kernel.kind.value, "beta": self.kernel.beta,
                "gamma": self.gamma, "tau": self.tau, "eta": self.eta,
                "kappa0": self.kappa0, "lambda": self.lam, "n": self.n}


@dataclass(frozen=True)
class ThresholdSet:
    """Vertex-class thresholds.

    ``all_quick`` marks the case with no slow vertices, in which ``a_sl`` is 0.
    """

    a_sl: float
    a_str: float
    a_ssl: float
    all_quick: bool


def _check_rank(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0.0)) or np.any(arr > 1.0):
        raise DomainError(f"{name} must lie in (0,1]")
    return arr


def kernel_eval(kernel: KernelSpec, x, y):
    """Kernel value ``p(x,y)``; vectorised over array arguments."""
    xa = _check_rank(x)
    ya = _check_rank(y, "y")
    g, b = kernel.gamma, kernel.beta
    if kernel.kind is KernelKind.FACTOR:
        out = b * (xa ** (-g) * ya ** (-g))  # grouped so the product is exactly symmetric
    else:
        lo = np.minimum(xa, ya)
        hi = np.maximum(xa, ya)
        out = b * lo ** (-g) * hi ** (g - 1.0)
    return float(out) if out.ndim == 0 else out


def connection_prob(params: ModelParams, i: int, j: int) -> float:
    """Edge probability ``min(p(i/N, j/N)/N, 1)`` for distinct vertices."""
    n = params.n
    if not (1 <= i <= n and 1 <= j <= n):
        raise DomainError(f"vertex indices must lie in 1..{n}")
    if i == j:
        raise DomainError("no self-loops: i must differ from j")
    return min(kernel_eval(params.kernel, i / n, j / n) / n, 1.0)


def kappa(params: ModelParams, x):
    """Update rate as a function of rank, ``kappa0 * x**(-gamma*eta)``."""
    xa = _check_rank(x)
    out = params.kappa0 * xa ** (-params.gamma * params.eta)
    return float(out) if out.ndim == 0 else out


def update_rate(params: ModelParams, i: int) -> float:
    """Update rate of vertex ``i``."""
    if not (1 <= i <= params.n):
        raise DomainError(f"vertex index must lie in 1..{params.n}")
    return kappa(params, i / params.n)


def update_rates(params: ModelParams) -> np.ndarray:
    """Update rates of all vertices, index 0 holding vertex 1."""
    ranks = np.arange(1, params.n + 1, dtype=float) / params.n
    return params.kappa0 * ranks ** (-params.gamma * params.eta)


def mean_degree(params_or_kernel, x):
    """Closed form of the integral of ``p(x,y)`` over ``y`` in (0,1]."""
    kernel = _kernel_of(params_or_kernel)
    xa = _check_rank(x)
    g, b = kernel.gamma, kernel.beta
    if kernel.kind is KernelKind.FACTOR:
        out = b * xa ** (-g) / (1.0 - g)
    else:
        out = b * (1.0 / (1.0 - g) + (xa ** (-g) - 1.0) / g)
    return float(out) if out.ndim == 0 else out


def _kernel_of(obj) -> KernelSpec:
    return obj if isinstance(obj, KernelSpec) else obj.kernel


def integrate_y_gamma(h, gamma: float, b: float = 1.0, breakpoints=(),
                      epsrel: float = QUAD_EPSREL, what: str = "integral") -> float:
    """Integrate ``y**(-gamma) * h(y)`` over ``(0, b]`` for bounded ``h``.

    The substitution ``y = u**(1/(1-gamma))`` turns the integrand into
    ``h(u**(1/(1-gamma)))/(1-gamma)``, which is bounded at the origin.
    ``breakpoints`` are given in ``y`` and mark kinks of ``h``.
    """
    e = 1.0 / (1.0 - gamma)
    ub = b ** (1.0 - gamma)
    pts = sorted({p ** (1.0 - gamma) for p in breakpoints if 0.0 < p < b})

    def f(u):
        return h(u ** e) if u > 0.0 else h(0.0)

    kwargs = {"epsabs": 0.0, "epsrel": epsrel, "limit": 500, "full_output": 1}
    if pts:
        kwargs["points"] = pts
    res = integrate.quad(f, 0.0, ub, **kwargs)
    val, err = res[0], res[1]
    if len(res) > 3 or not math.isfinite(val) or err > max(1e-8 * abs(val), 1e-300):
        msg = res[3] if len(res) > 3 else "tolerance not met"
        raise QuadratureError(
            f"{what}: quadrature failed (value={val!r}, abserr={err!r}, "
            f"intervals={res[2].get('last')}): {msg}")
    return val * e


def _smooth_part(kernel: KernelSpec, x: float):
    """``p(x,y) * y**gamma`` as a function of ``y`` (bounded near 0)."""
    g, b = kernel.gamma, kernel.beta
    if kernel.kind is KernelKind.FACTOR:
        c = b * x ** (-g)
        return lambda y: c
    def h(y):
        if y <= x:
            return b * x ** (g - 1.0)
        return b * x ** (-g) * y ** (2.0 * g - 1.0)
    return h


def mean_degree_quadrature(kernel: KernelSpec, x: float) -> float:
    """Numerical counterpart of :func:`mean_degree` (used for validation)."""
    _check_rank(x)
    bp = (x,) if kernel.kind is KernelKind.PREF_ATTACH else ()
    return integrate_y_gamma(_smooth_part(kernel, x), kernel.gamma,
                             breakpoints=bp, what="mean_degree")


def pi_integral(params: ModelParams, x: float) -> float:
    """``pi(x)``: integral of ``p(x,y)/(kappa(x)+kappa(y))`` over ``y``."""
    _check_rank(x)
    if params.kappa0 <= 0.0:
        raise DomainError("pi(x) requires kappa0 > 0")
    k = params.kernel
    hp = _smooth_part(k, x)
    kx = kappa(params, x)
    k0, ge = params.kappa0, params.gamma * params.eta

    def h(y):
        if y == 0.0:
            if ge > 0:
                return 0.0
            if ge == 0:
                return hp(0.0) / (kx + k0)
            return hp(0.0) / kx
        return hp(y) / (kx + k0 * y ** (-ge))

    bp = (x,) if k.kind is KernelKind.PREF_ATTACH else ()
    return integrate_y_gamma(h, k.gamma, breakpoints=bp, what=f"pi({x})")


def t_loc_upper(params: ModelParams, x: float) -> float:
    """Per-vertex local time scale ``max{8, 8/(3 kappa), 16 lam^2 pi/kappa}``."""
    kx = kappa(params, x)
    if kx <= 0.0:
        raise DomainError("T^loc requires kappa0 > 0")
    third = 16.0 * params.lam ** 2 * pi_integral(params, x) / kx if params.lam > 0 else 0.0
    return max(8.0, 8.0 / (3.0 * kx), third)


def t_loc_lower(params: ModelParams, a: float) -> float:
    """Local survival time of a star of rank ``a``: ``lam^2 p(a,1)/kappa(a)``."""
    if not (0.0 < a < 1.0):
        raise DomainError("a must lie in (0,1)")
    ka = kappa(params, a)
    if ka <= 0.0:
        raise DomainError("T_loc requires kappa0 > 0")
    return params.lam ** 2 * kernel_eval(params.kernel, a, 1.0) / ka


def _a_strong(kernel: KernelSpec, lam: float) -> float:
    target = 1.0 / (10.0 * lam ** 2)
    if mean_degree(kernel, 1.0) > target:
        return 1.0
    lo = 0.5
    while mean_degree(kernel, lo) <= target:
        lo *= 1e-3
        if lo < 1e-300:
            raise DomainError("strong threshold below representable range")
    f = lambda s: math.log(mean_degree(kernel, math.exp(s)) / target)
    s = optimize.brentq(f, math.log(lo), 0.0, xtol=1e-14, rtol=1e-15, maxiter=500)
    return math.exp(s)


def thresholds(params: ModelParams) -> ThresholdSet:
    """Slow, strong and strong-slow rank thresholds.

    Slow vertices (update rate below lambda) are only defined for eta < 0.
    For eta >= 0 every vertex is treated as quick; when also lambda > kappa0
    that assumption is violated and a warning is issued.
    """
    lam = params.lam
    if not (lam > 0.0):
        raise DomainError("thresholds require lambda > 0")
    a_str = _a_strong(params.kernel, lam)
    if params.eta < 0:
        if params.kappa0 <= 0:
            raise DomainError("slow threshold requires kappa0 > 0")
        a_sl = min((lam / params.kappa0) ** (-1.0 / (params.gamma * params.eta)), 1.0)
        return ThresholdSet(a_sl, a_str, min(a_sl, a_str), False)
    if lam > params.kappa0:
        warnings.warn("eta >= 0 with lambda > kappa0: treating all vertices as quick",
                      RuntimeWarning, stacklevel=2)
    return ThresholdSet(0.0, a_str, 0.0, True)


def condp_constants(kernel: KernelSpec) -> tuple[float, float]:
    """Witness constants ``(c1, c2)`` including the safety margin."""
    g, b = kernel.gamma, kernel.beta
    if kernel.kind is KernelKind.FACTOR:
        c2 = b / (1.0 - g)
    else:
        c2 = b * (1.0 / (1.0 - g) + 1.0 / g)
    return b, c2 * (1.0 + CONDP_MARGIN)


def validate_condp(kernel: KernelSpec, n_grid: int = 2000) -> tuple[float, float]:
    """Check ``c1 a^-g <= p(a,1) <= mean_degree(a) < c2 a^-g`` on a log grid."""
    c1, c2 = condp_constants(kernel)
    a = np.geomspace(1e-6, 0.5, n_grid)
    env = a ** (-kernel.gamma)
    p1 = kernel_eval(kernel, a, np.ones_like(a))
    md = mean_degree(kernel, a)
    slack = 1e-12
    checks = [("c1 a^-g <= p(a,1)", c1 * env <= p1 * (1 + slack)),
              ("p(a,1) <= mean_degree(a)", p1 <= md * (1 + slack)),
              ("mean_degree(a) < c2 a^-g", md < c2 * env)]
    for label, ok in checks:
        if not np.all(ok):
            bad = a[np.argmin(ok)]
            raise CondpValidationError(f"{label} violated at a={bad:.6g}")
    return c1, c2
