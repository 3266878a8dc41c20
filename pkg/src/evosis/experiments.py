"""Multi-run studies confronting simulation with the closed-form theory."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numba as nb
import numpy as np

from . import engine as E
from . import graph as G
from .errors import ConfigError, DomainError, RegimeError
from .params import ModelParams, kernel_eval
from .streams import (TAG_DUALITY_ALL, TAG_DUALITY_SEED, TAG_EXTINCTION, TAG_STAR,
                      TAG_STATIONARITY, TAG_SWEEP, make_rng, parallel_map)
from .theory import RegimeKind, classify_regime

DRIFT_TOL = 0.10
N_BATCHES = 10

# --------------------------------------------------------------------------
# Fitting


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    slope_stderr: float
    points: int

    def to_dict(self) -> dict:
        return asdict(self)


def fit_loglog(x, y, yerr=None) -> FitResult:
    """Weighted least squares of ``log y`` on ``log x``.

    ``yerr`` are standard errors of ``y``; the log-scale errors ``yerr/y`` give
    weights ``1/sigma^2`` and the slope error is the unscaled covariance.
    Without ``yerr`` the fit is ordinary least squares with residual-based error.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("log-log fit needs at least two positive points")
    lx, ly = np.log(x), np.log(y)
    if yerr is not None:
        sig = np.asarray(yerr, float) / y
        if np.any(~(sig > 0)):
            raise DomainError("standard errors must be positive for a weighted fit")
        coef, cov = np.polyfit(lx, ly, 1, w=1.0 / sig, cov="unscaled")
    elif x.size > 2:
        coef, cov = np.polyfit(lx, ly, 1, cov=True)
    else:
        coef, cov = np.polyfit(lx, ly, 1), np.full((2, 2), np.nan)
    return FitResult(float(coef[0]), float(coef[1]), float(math.sqrt(cov[0, 0])), int(x.size))


# --------------------------------------------------------------------------
# Plateau estimation


@dataclass(frozen=True)
class Plateau:
    rho_hat: float
    stderr: float
    stable: bool
    drift: float  # relative difference between the window halves


def plateau_from_series(t, density, burn_in: float, window: float) -> Plateau:
    """Plateau statistics of a density series over ``[burn_in*T, (burn_in+window)*T]``.

    ``T`` is the last sample time. The stderr uses batch means over the window.
    """
    t = np.asarray(t, float)
    d = np.asarray(density, float)
    if not (0 <= burn_in and 0 < window and burn_in + window <= 1 + 1e-12):
        raise ConfigError("need 0 <= burn_in, 0 < window and burn_in + window <= 1")
    horizon = t[-1]
    lo, hi = burn_in * horizon, (burn_in + window) * horizon
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if sel.sum() < 2:
        raise ConfigError("plateau window holds fewer than two grid points")
    w = d[sel]
    rho = float(w.mean())
    half = w.size // 2
    m1, m2 = float(w[:half].mean()), float(w[half:].mean())
    scale = max(abs(m1), abs(m2))
    drift = abs(m1 - m2) / scale if scale > 0 else math.inf
    nb_ = min(N_BATCHES, w.size)
    batches = np.array([b.mean() for b in np.array_split(w, nb_)])
    se = float(batches.std(ddof=1) / math.sqrt(nb_)) if nb_ > 1 else 0.0
    stable = bool(rho > 0 and np.all(w > 0) and drift < DRIFT_TOL)
    return Plateau(rho, se, stable, drift)


def plateau_density(traj: E.Trajectory, burn_in: float = 0.3, window: float = 0.7) -> Plateau:
    """Plateau of one trajectory; extinction inside or before the window is unstable."""
    p = plateau_from_series(traj.sample_times, traj.density, burn_in, window)
    horizon = traj.sample_times[-1]
    if traj.extinction_time is not None and traj.extinction_time <= (burn_in + window) * horizon:
        return Plateau(p.rho_hat, p.stderr, False, p.drift)
    return p


# --------------------------------------------------------------------------
# Lambda sweep


@dataclass(frozen=True)
class SweepConfig:
    params: ModelParams
    lambda_list: tuple
    replicas: int
    t_max: float
    record_grid: float = 1.0
    burn_in: float = 0.3
    window: float = 0.7
    master_seed: int = 0

    def __post_init__(self):
        lam = np.asarray(self.lambda_list, float)
        if lam.size == 0 or np.any(lam <= 0) or np.any(np.diff(lam) >= 0):
            raise ConfigError("lambda_list must be positive and strictly decreasing")
        if self.replicas < 2:
            raise ConfigError("replicas must be at least 2")
        if not (0 <= self.burn_in and 0 < self.window and self.burn_in + self.window <= 1):
            raise ConfigError("need burn_in + window <= 1")


@dataclass(frozen=True)
class SweepRow:
    lam: float
    rho_hat: float
    stderr: float
    stable: bool
    drift: float
    extinct_replicas: int


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    fit: FitResult | None
    excluded: tuple  # lambdas with unstable plateaus

    @property
    def sufficient(self) -> bool:
        return self.fit is not None

    @property
    def monotone(self) -> bool:
        """rho_hat strictly decreases along the (decreasing) lambda list."""
        r = [row.rho_hat for row in self.rows]
        return all(b < a for a, b in zip(r, r[1:]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("lambda,rho_hat,stderr,stable\n")
            for r in self.rows:
                fh.write(f"{r.lam:.17g},{r.rho_hat:.17g},{r.stderr:.17g},{int(r.stable)}\n")


def sweep_row(cfg: SweepConfig, index: int, threads: int | None = 1) -> SweepRow:
    """Plateau estimate at ``cfg.lambda_list[index]`` over independent replicas.

    Each replica yields its own window mean; ``rho_hat`` and ``stderr`` are their
    mean and standard error. Stability is judged on the replica-averaged curve
    and requires every replica to survive the window.
    """
    lam = float(cfg.lambda_list[index])
    p = cfg.params.with_lambda(lam)
    sim = E.SimConfig(t_max=cfg.t_max, record_grid=cfg.record_grid, stop_on_extinction=True)
    trajs = E.run_replicas(p, sim, cfg.replicas, cfg.master_seed, threads, TAG_SWEEP, index)
    per = [plateau_density(tr, cfg.burn_in, cfg.window) for tr in trajs]
    means = np.array([q.rho_hat for q in per])
    avg = np.mean([tr.density for tr in trajs], axis=0)
    pooled = plateau_from_series(trajs[0].sample_times, avg, cfg.burn_in, cfg.window)
    end = (cfg.burn_in + cfg.window) * cfg.t_max
    extinct = sum(tr.extinction_time is not None and tr.extinction_time <= end for tr in trajs)
    return SweepRow(lam, float(means.mean()), float(means.std(ddof=1) / math.sqrt(means.size)),
                    bool(pooled.stable and extinct == 0), pooled.drift, int(extinct))


def fit_rows(rows) -> tuple[FitResult | None, tuple]:
    stable = [r for r in rows if r.stable]
    excluded = tuple(r.lam for r in rows if not r.stable)
    if len(stable) < 3:
        return None, excluded
    x = [r.lam for r in stable]
    y = [r.rho_hat for r in stable]
    err = [r.stderr for r in stable]
    fit = fit_loglog(x, y, err if all(e > 0 for e in err) else None)
    return fit, excluded


def sweep_lambda(cfg: SweepConfig, threads: int | None = 1) -> SweepResult:
    rows = tuple(sweep_row(cfg, i, threads) for i in range(len(cfg.lambda_list)))
    fit, excluded = fit_rows(rows)
    return SweepResult(rows, fit, excluded)


# --------------------------------------------------------------------------
# Extinction-time scaling in N


@dataclass(frozen=True)
class ExtinctionRow:
    n: int
    median: float
    median_stderr: float
    censored_frac: float
    usable: bool


@dataclass(frozen=True)
class ExtinctionScaling:
    rows: tuple
    fit: FitResult | None
    band: tuple  # (gamma*(1-eta), (1-eta)/(2-eta))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("n,median_text,censored_frac\n")
            for r in self.rows:
                fh.write(f"{r.n},{r.median:.17g},{r.censored_frac:.17g}\n")


def _bootstrap_median_se(x: np.ndarray, rng: np.random.Generator, reps: int = 400) -> float:
    idx = rng.integers(0, x.size, size=(reps, x.size))
    return float(np.median(x[idx], axis=1).std(ddof=1))


def extinction_scaling(params: ModelParams, n_list, replicas: int, t_cap: float,
                       master_seed: int = 0, threads: int | None = 1) -> ExtinctionScaling:
    """Median extinction time per N and its log-log growth exponent.

    Points with more than half the runs censored are flagged unusable and left
    out of the fit; the median of a sample with censoring below one half is
    still exact.
    """
    regime = classify_regime(params.kernel.kind, params.tau, params.eta)
    if regime.kind is not RegimeKind.FAST:
        raise RegimeError(f"extinction scaling needs the fast regime, got {regime}")
    ns = [int(n) for n in n_list]
    if len(ns) < 4 or any(b <= a for a, b in zip(ns, ns[1:])) or ns[-1] < 8 * ns[0]:
        raise ConfigError("n_list must be increasing, hold >= 4 values and span >= 8x")
    rows = []
    for n in ns:
        p = params.with_n(n)
        sim = E.SimConfig(t_max=t_cap, record_grid=t_cap, stop_on_extinction=True)
        sample = E.extinction_time(p, sim, replicas, master_seed, threads, TAG_EXTINCTION, n)
        cf = sample.censored_fraction
        med = float(np.median(sample.times))
        se = _bootstrap_median_se(sample.times, make_rng(master_seed, 0, TAG_EXTINCTION, n + (1 << 40)))
        rows.append(ExtinctionRow(n, med, se, cf, cf <= 0.5))
    use = [r for r in rows if r.usable and r.median > 0]
    fit = None
    if len(use) >= 3:
        err = [r.median_stderr for r in use]
        fit = fit_loglog([r.n for r in use], [r.median for r in use],
                         err if all(e > 0 for e in err) else None)
    g, eta = params.gamma, params.eta
    return ExtinctionScaling(tuple(rows), fit, (g * (1 - eta), (1 - eta) / (2 - eta)))


# --------------------------------------------------------------------------
# Isolated star


@nb.njit(cache=True, nogil=True)
def _star_run(k, pool_factor, eta, lam, kappa0, t_cap, rng):
    """Extinction time of a hub of expected degree ``k`` started infected.

    Leaves are tracked by counts: connected healthy/infected (ch, ci) and
    disconnected infected (di). Returns ``(time, censored, events)``.
    """
    pool = int(round(pool_factor * k))
    q = 1.0 / pool_factor
    k_hub = kappa0 * k ** eta
    off = kappa0 * (1.0 - q)
    on = kappa0 * q
    ch = rng.binomial(pool, q)
    ci = 0
    di = 0
    hub = 1
    t = 0.0
    ev = 0
    while True:
        dh = pool - ch - ci - di
        r_hub = 1.0 if hub == 1 else 0.0
        r_inf = lam * ch if hub == 1 else lam * ci
        r_rec = float(ci + di)
        r_off = off * (ci + ch)
        r_on = on * (di + dh)
        tot = r_hub + r_inf + r_rec + r_off + r_on + k_hub
        t += rng.standard_exponential() / tot
        if t > t_cap:
            return t_cap, True, ev
        ev += 1
        u = rng.random() * tot
        if u < r_hub:
            hub = 0
        elif u < r_hub + r_inf:
            if hub == 1:
                ch -= 1
                ci += 1
            else:
                hub = 1
        elif u < r_hub + r_inf + r_rec:
            if rng.random() * r_rec < ci:
                ci -= 1
                ch += 1
            else:
                di -= 1
        elif u < r_hub + r_inf + r_rec + r_off:
            if rng.random() * (ci + ch) < ci:
                ci -= 1
                di += 1
            else:
                ch -= 1
        elif u < r_hub + r_inf + r_rec + r_off + r_on:
            if rng.random() * (di + dh) < di:
                di -= 1
                ci += 1
            else:
                ch += 1
        else:
            infected = ci + di
            ci = rng.binomial(infected, q)
            di = infected - ci
            ch = rng.binomial(pool - infected, q)
        if hub == 0 and ci == 0 and di == 0:
            return t, False, ev


@dataclass(frozen=True)
class StarRow:
    k: int
    mean_time: float
    stderr: float
    censored_frac: float
    mean_events: float


@dataclass(frozen=True)
class StarResult:
    rows: tuple
    fit: FitResult | None
    eta: float
    lam: float
    target_slope: float  # 1 - eta for eta < 0, 1 - 2 eta for 0 <= eta <= 1/2

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("k,mean_time,stderr\n")
            for r in self.rows:
                fh.write(f"{r.k},{r.mean_time:.17g},{r.stderr:.17g}\n")


def star_target_slope(eta: float) -> float:
    return 1.0 - eta if eta < 0 else 1.0 - 2.0 * eta


def star_survival(k_list, eta: float, lam: float, pool_factor: float = 10.0, replicas: int = 2000,
                  master_seed: int = 0, kappa0: float = 1.0, t_cap: float = math.inf,
                  threads: int | None = 1) -> StarResult:
    """Mean extinction time of an isolated star per expected hub degree ``k``.

    With a finite ``t_cap`` runs are censored at the cap and the reported mean
    is a lower bound.
    """
    ks = [int(k) for k in k_list]
    if any(b <= a for a, b in zip(ks, ks[1:])) or ks[0] < 1:
        raise ConfigError("k_list must be positive and increasing")
    if eta > 0.5:
        raise DomainError("star heuristic covers eta <= 1/2")
    if pool_factor < 1:
        raise ConfigError("pool_factor must be at least 1")
    if lam > 0 and lam * lam * ks[0] < 5:
        warnings.warn("lambda^2 * min(k) is small; the local-survival heuristic may not apply",
                      stacklevel=2)
    rows = []
    for k in ks:
        def one(r, k=k):
            return _star_run(float(k), float(pool_factor), float(eta), float(lam), float(kappa0),
                             float(t_cap), make_rng(master_seed, r, TAG_STAR, k))
        out = parallel_map(one, replicas, threads)
        times = np.array([o[0] for o in out])
        cens = np.array([o[1] for o in out])
        evs = np.array([o[2] for o in out], float)
        rows.append(StarRow(k, float(times.mean()), float(times.std(ddof=1) / math.sqrt(replicas)),
                            float(cens.mean()), float(evs.mean())))
    fit = None
    if len(rows) >= 2 and all(r.mean_time > 0 for r in rows):
        err = [r.stderr for r in rows]
        fit = fit_loglog([r.k for r in rows], [r.mean_time for r in rows],
                         err if all(e > 0 for e in err) else None)
    return StarResult(tuple(rows), fit, float(eta), float(lam), star_target_slope(eta))


# --------------------------------------------------------------------------
# Self-duality


@dataclass(frozen=True)
class DualityResult:
    t: float
    all_infected: float
    all_infected_se: float
    seed_average: float
    seed_average_se: float

    @property
    def z(self) -> float:
        d = abs(self.all_infected - self.seed_average)
        se = math.hypot(self.all_infected_se, self.seed_average_se)
        if se == 0:
            return 0.0 if d == 0 else math.inf
        return d / se


def duality_check(params: ModelParams, t: float, replicas: int, master_seed: int = 0,
                  threads: int | None = 1) -> DualityResult:
    """Compare ``I_N(t)`` from all-infected starts with the seed-averaged survival.

    The right side is stratified: ``ceil(replicas / N)`` runs per seed vertex.
    """
    n = params.n
    if n > 32:
        raise ConfigError("duality_check is limited to N <= 32")
    if t < 0:
        raise DomainError("t must be nonnegative")
    if t == 0:
        return DualityResult(0.0, 1.0, 0.0, 1.0, 0.0)
    cfg = E.SimConfig(t_max=t, record_grid=t, stop_on_extinction=True)
    curve = E.estimate_IN(params, cfg, replicas, master_seed, threads, TAG_DUALITY_ALL)
    per_seed = max(2, -(-replicas // n))
    ps, ses = [], []
    for i in range(1, n + 1):
        p, se = E.survival_single_seed(params, i, t, per_seed, master_seed, threads, TAG_DUALITY_SEED)
        ps.append(p)
        ses.append(se)
    return DualityResult(float(t), float(curve.mean[-1]), float(curve.stderr[-1]),
                         float(np.mean(ps)), float(math.sqrt(np.sum(np.square(ses))) / n))


# --------------------------------------------------------------------------
# Graph stationarity under the coupled dynamics


@dataclass(frozen=True)
class StationarityResult:
    chi2: float
    dof: int
    p_value: float
    blocks: int
    replicas: int


def rank_blocks(n: int, blocks: int) -> np.ndarray:
    """Block label (0-based) per vertex from a log-spaced partition of ranks."""
    edges = np.unique(np.round(np.geomspace(1, n + 1, blocks + 1)).astype(int))
    lab = np.searchsorted(edges, np.arange(1, n + 1), side="right") - 1
    return np.minimum(lab, edges.size - 2)


def _block_moments(params: ModelParams, lab: np.ndarray, nb_: int):
    """Exact per-block-pair sums of ``p_ij`` and ``p_ij (1 - p_ij)`` over ``i < j``."""
    n = params.n
    mean = np.zeros((nb_, nb_))
    var = np.zeros((nb_, nb_))
    ranks = np.arange(1, n + 1) / n
    for i in range(n - 1):
        j = np.arange(i + 1, n)
        p = np.minimum(kernel_eval(params.kernel, ranks[i], ranks[j]) / n, 1.0)
        li = lab[i]
        np.add.at(mean[li], lab[j], p)
        np.add.at(var[li], lab[j], p * (1 - p))
    return mean, var


def stationarity_test(params: ModelParams, t: float, replicas: int, master_seed: int = 0,
                      blocks: int = 8, threads: int | None = 1) -> StationarityResult:
    """Chi-square test of block edge counts after running the coupled process to ``t``.

    Under the product-Bernoulli law each block count has mean ``sum p`` and
    variance ``sum p(1-p)``; the statistic sums squared standardized deviations
    of the replica totals over block pairs.
    """
    from scipy.stats import chi2 as chi2_dist

    lab = rank_blocks(params.n, blocks)
    nb_ = int(lab.max()) + 1
    cfg = E.SimConfig(t_max=t, record_grid=t, stop_on_extinction=False)

    def one(r):
        rng = make_rng(master_seed, r, TAG_STATIONARITY, 0)
        g = G.init_stationary(params, rng)
        E.run(params, g, cfg, rng)
        e = g.edges() - 1
        a, b = lab[e[:, 0]], lab[e[:, 1]]
        counts = np.zeros((nb_, nb_))
        np.add.at(counts, (np.minimum(a, b), np.maximum(a, b)), 1)
        return counts

    obs = np.sum(parallel_map(one, replicas, threads), axis=0)
    mean, var = _block_moments(params, lab, nb_)
    iu = np.triu_indices(nb_)
    m, v, o = mean[iu] * replicas, var[iu] * replicas, obs[iu]
    keep = v > 0
    stat = float(np.sum((o[keep] - m[keep]) ** 2 / v[keep]))
    dof = int(keep.sum())
    return StationarityResult(stat, dof, float(chi2_dist.sf(stat, dof)), nb_, replicas)
