"""Exact event-driven simulation of the coupled graph and infection process.

Three aggregate channels compete: vertex updates (total rate ``sum kappa_i``,
vertex chosen by inverse CDF), recoveries (rate ``#infected``, uniform infected
vertex) and transmissions (rate ``lam * W`` with ``W = sum_{i infected} deg(i)``,
source chosen by a Fenwick tree over degrees, target uniform among its
neighbours, no-op if already infected).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numba as nb
import numpy as np

from . import graph as G
from .errors import ConfigError, ConsistencyError, DomainError
from .params import ModelParams, update_rates
from .streams import TAG_DEFAULT, make_rng, parallel_map

# --------------------------------------------------------------------------
# Configuration and results


@dataclass(frozen=True)
class AllInfected:
    pass


@dataclass(frozen=True)
class SingleSeed:
    vertex: int  # 1-based


@dataclass(frozen=True)
class InfectedSet:
    vertices: tuple  # 1-based


InitialCondition = AllInfected | SingleSeed | InfectedSet


@dataclass(frozen=True)
class SimConfig:
    t_max: float
    record_grid: float
    stop_on_extinction: bool = True
    initial_condition: InitialCondition = field(default_factory=AllInfected)
    max_events: int = 0  # 0 means unlimited
    debug_every: int = 0  # recount bookkeeping every this many events (0 = never)

    def __post_init__(self):
        if not (self.t_max > 0) or not math.isfinite(self.t_max):
            raise ConfigError("t_max must be positive and finite")
        if not (self.record_grid > 0):
            raise ConfigError("record_grid must be positive")

    @property
    def n_grid(self) -> int:
        return int(math.floor(self.t_max / self.record_grid + 1e-9)) + 1

    def grid(self) -> np.ndarray:
        return np.arange(self.n_grid, dtype=float) * self.record_grid


@dataclass
class Trajectory:
    n: int
    sample_times: np.ndarray
    infected_counts: np.ndarray
    extinction_time: float | None
    events_processed: int
    t_end: float
    truncated: bool = False  # stopped by max_events

    @property
    def density(self) -> np.ndarray:
        return self.infected_counts / self.n

    @property
    def censored(self) -> bool:
        return self.extinction_time is None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("t,infected_count\n")
            for t, c in zip(self.sample_times, self.infected_counts):
                fh.write(f"{t:.17g},{int(c)}\n")


@dataclass
class InfectionState:
    """Per-vertex flags, infected index list and a Fenwick tree of degrees."""

    flags: np.ndarray   # uint8, 0-based vertex
    inf_list: np.ndarray  # int32
    pos: np.ndarray     # int32 position in inf_list or -1
    fenwick: np.ndarray  # int64, size n+1
    meta: np.ndarray    # int64 [infected_count, transmission_weight]

    @property
    def infected_count(self) -> int:
        return int(self.meta[0])

    @property
    def transmission_weight(self) -> int:
        return int(self.meta[1])

    def infected_vertices(self) -> np.ndarray:
        return np.sort(self.inf_list[:self.meta[0]].astype(np.int64)) + 1

    def check(self, graph: G.GraphState) -> None:
        """Recount every aggregate from scratch and compare."""
        _check_infection(self, graph)


def new_infection_state(graph: G.GraphState, ic: InitialCondition) -> InfectionState:
    n = graph.n
    st = InfectionState(np.zeros(n, np.uint8), np.zeros(n, np.int32), np.full(n, -1, np.int32),
                        np.zeros(n + 1, np.int64), np.zeros(2, np.int64))
    if isinstance(ic, AllInfected):
        verts = np.arange(n)
    elif isinstance(ic, SingleSeed):
        if not (1 <= ic.vertex <= n):
            raise DomainError(f"seed must lie in 1..{n}")
        verts = np.array([ic.vertex - 1])
    elif isinstance(ic, InfectedSet):
        verts = np.unique(np.asarray(ic.vertices, dtype=np.int64)) - 1
        if verts.size and (verts.min() < 0 or verts.max() >= n):
            raise DomainError(f"infected set must lie in 1..{n}")
    else:
        raise ConfigError(f"unknown initial condition {ic!r}")
    _infect_many(st.flags, st.inf_list, st.pos, st.fenwick, st.meta, graph.deg,
                 verts.astype(np.int64))
    return st


def _check_infection(st: InfectionState, g: G.GraphState) -> None:
    k = int(st.meta[0])
    flags = st.flags.astype(bool)
    if flags.sum() != k:
        raise ConsistencyError("infected count differs from flag count")
    lst = st.inf_list[:k]
    if np.unique(lst).size != k or not np.all(flags[lst]):
        raise ConsistencyError("infected list inconsistent with flags")
    if not np.all(st.pos[lst] == np.arange(k)):
        raise ConsistencyError("position index inconsistent")
    w = int(g.deg[flags].astype(np.int64).sum())
    if w != st.meta[1]:
        raise ConsistencyError(f"transmission weight {st.meta[1]} vs recount {w}")
    # Fenwick prefix sums must match cumulative infected degrees.
    cum = np.cumsum(np.where(flags, g.deg, 0).astype(np.int64))
    for i in np.unique(np.linspace(0, g.n - 1, min(g.n, 64)).astype(int)):
        if _fw_prefix(st.fenwick, i) != cum[i]:
            raise ConsistencyError("Fenwick tree inconsistent")


# --------------------------------------------------------------------------
# numba kernels


@nb.njit(cache=True, inline="always")
def _fw_add(tree, i, delta):
    k = i + 1
    n1 = tree.shape[0]
    while k < n1:
        tree[k] += delta
        k += k & (-k)


@nb.njit(cache=True)
def _fw_prefix(tree, i):
    s = 0
    k = i + 1
    while k > 0:
        s += tree[k]
        k -= k & (-k)
    return s


@nb.njit(cache=True, inline="always")
def _fw_find(tree, r, top):
    """0-based index ``i`` with ``prefix(i-1) <= r < prefix(i)``."""
    pos = 0
    bit = top
    n1 = tree.shape[0]
    while bit > 0:
        nxt = pos + bit
        if nxt < n1 and tree[nxt] <= r:
            pos = nxt
            r -= tree[nxt]
        bit >>= 1
    return pos


@nb.njit(cache=True)
def _infect_many(flags, inf_list, pos, fen, meta, deg, verts):
    for v in verts:
        if flags[v] == 0:
            flags[v] = 1
            pos[v] = meta[0]
            inf_list[meta[0]] = v
            meta[0] += 1
            meta[1] += deg[v]
            _fw_add(fen, v, deg[v])


@nb.njit(cache=True, nogil=True)
def _recount_ok(flags, fen, meta, deg, n):
    w = 0
    for v in range(n):
        if flags[v]:
            w += deg[v]
    if w != meta[1]:
        return False
    acc = 0
    for v in range(n):
        if flags[v]:
            acc += deg[v]
        if _fw_prefix(fen, v) != acc:
            return False
    return True


@nb.njit(cache=True, nogil=True)
def _run(kind, beta, gamma, n, nbr, twin, start, deg, cap, gmeta, removed, added,
         kcum, ktot, lam, flags, inf_list, pos, fen, imeta,
         t_max, dt_rec, n_grid, stop_ext, max_events, debug_every, rng, counts):
    """Return ``(status, t_end, t_ext, events, next_k)``.

    status: 0 ok, 1 truncated by max_events, -1/-2 capacity failure,
    -3 bookkeeping mismatch.
    """
    top = 1
    while top * 2 < fen.shape[0]:
        top *= 2
    t = 0.0
    t_ext = -1.0
    events = 0
    k = 0
    status = 0
    if imeta[0] == 0:
        t_ext = 0.0
    while True:
        if stop_ext and imeta[0] == 0:
            break
        r_upd = ktot
        r_rec = float(imeta[0])
        r_tr = lam * imeta[1]
        total = r_upd + r_rec + r_tr
        if total <= 0.0:
            break
        t_new = t + rng.standard_exponential() / total
        while k < n_grid and k * dt_rec < t_new:
            counts[k] = imeta[0]
            k += 1
        if t_new > t_max:
            t = t_max
            break
        t = t_new
        u = rng.random() * total
        if u < r_upd:
            v = np.searchsorted(kcum, u, side="right")
            if v >= n:
                v = n - 1
            was = flags[v]
            if was:
                imeta[1] -= deg[v]
                _fw_add(fen, v, -deg[v])
            nrem, nadd = G._vertex_update(kind, beta, gamma, n, nbr, twin, start, deg, cap,
                                          gmeta, v, rng, removed, added)
            if nadd < 0:
                return nadd, t, t_ext, events, k
            for q in range(nrem):
                j = removed[q]
                if flags[j]:
                    imeta[1] -= 1
                    _fw_add(fen, j, -1)
            for q in range(nadd):
                j = added[q]
                if flags[j]:
                    imeta[1] += 1
                    _fw_add(fen, j, 1)
            if was:
                imeta[1] += deg[v]
                _fw_add(fen, v, deg[v])
        elif u < r_upd + r_rec:
            idx = rng.integers(0, imeta[0])
            v = inf_list[idx]
            last = inf_list[imeta[0] - 1]
            inf_list[idx] = last
            pos[last] = idx
            pos[v] = -1
            imeta[0] -= 1
            flags[v] = 0
            imeta[1] -= deg[v]
            _fw_add(fen, v, -deg[v])
            if imeta[0] == 0 and t_ext < 0.0:
                t_ext = t
        else:
            r = rng.integers(0, imeta[1])
            v = _fw_find(fen, r, top)
            j = nbr[start[v] + rng.integers(0, deg[v])]
            if flags[j] == 0:
                flags[j] = 1
                pos[j] = imeta[0]
                inf_list[imeta[0]] = j
                imeta[0] += 1
                imeta[1] += deg[j]
                _fw_add(fen, j, deg[j])
        events += 1
        if debug_every > 0 and events % debug_every == 0:
            if not _recount_ok(flags, fen, imeta, deg, n):
                return -3, t, t_ext, events, k
        if max_events > 0 and events >= max_events:
            status = 1
            break
    while k < n_grid and k * dt_rec <= t:
        counts[k] = imeta[0]
        k += 1
    return status, t, t_ext, events, k


# --------------------------------------------------------------------------
# Public API


def update_cdf(params: ModelParams) -> tuple[np.ndarray, float]:
    rates = update_rates(params)
    cum = np.cumsum(rates)
    return cum, float(cum[-1]) if cum.size else 0.0


def run(params: ModelParams, graph: G.GraphState, cfg: SimConfig, rng: np.random.Generator,
        infection: InfectionState | None = None) -> Trajectory:
    """Simulate from the current graph; the graph and ``infection`` are mutated."""
    if graph.n != params.n:
        raise DomainError("graph size differs from params.n")
    st = infection if infection is not None else new_infection_state(graph, cfg.initial_condition)
    kcum, ktot = update_cdf(params)
    n_grid = cfg.n_grid
    counts = np.zeros(n_grid, dtype=np.int64)
    status, t_end, t_ext, events, k = _run(
        graph.kind, graph.beta, graph.gamma, graph.n, graph.nbr, graph.twin, graph.start,
        graph.deg, graph.cap, graph.meta, graph.removed, graph.scratch,
        kcum, ktot, float(params.lam), st.flags, st.inf_list, st.pos, st.fenwick, st.meta,
        float(cfg.t_max), float(cfg.record_grid), n_grid, bool(cfg.stop_on_extinction),
        int(cfg.max_events), int(cfg.debug_every), rng, counts)
    if status in (-1, -2):
        G._raise_capacity(status)
    if status == -3:
        raise ConsistencyError("incremental transmission bookkeeping diverged from recount")
    # Grid points after the last processed time keep the final count; after
    # extinction this is zero.
    counts[k:] = st.meta[0]
    ext = t_ext if t_ext >= 0.0 else None
    return Trajectory(graph.n, cfg.grid(), counts, ext, int(events), float(t_end), status == 1)


GraphFactory = Callable[[ModelParams, np.random.Generator], G.GraphState]


def _stationary(params: ModelParams, rng: np.random.Generator) -> G.GraphState:
    return G.init_stationary(params, rng)


def _replica(params: ModelParams, cfg: SimConfig, master_seed: int, replica: int,
             tag: int, sub: int, factory: GraphFactory) -> Trajectory:
    rng = make_rng(master_seed, replica, tag, sub)
    return run(params, factory(params, rng), cfg, rng)


def run_replicas(params: ModelParams, cfg: SimConfig, replicas: int, master_seed: int,
                 threads: int | None = 1, tag: int = TAG_DEFAULT, sub: int = 0,
                 graph_factory: GraphFactory | None = None) -> list[Trajectory]:
    """Independent replicas; each starts from ``graph_factory`` (default: a
    fresh stationary graph) drawn from the replica's own stream."""
    factory = graph_factory or _stationary
    return parallel_map(lambda r: _replica(params, cfg, master_seed, r, tag, sub, factory),
                        replicas, threads)


@dataclass(frozen=True)
class DensityCurve:
    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    replicas: int

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("t,mean_density,stderr\n")
            for a, b, c in zip(self.t, self.mean, self.stderr):
                fh.write(f"{a:.17g},{b:.17g},{c:.17g}\n")


def estimate_IN(params: ModelParams, cfg: SimConfig, replicas: int, master_seed: int,
                threads: int | None = 1, tag: int = TAG_DEFAULT,
                graph_factory: GraphFactory | None = None) -> DensityCurve:
    """Mean infected fraction on the record grid over independent replicas."""
    if replicas < 2:
        raise ConfigError("replicas must be at least 2")
    trajs = run_replicas(params, cfg, replicas, master_seed, threads, tag, 0, graph_factory)
    dens = np.stack([tr.density for tr in trajs])
    return DensityCurve(cfg.grid(), dens.mean(axis=0),
                        dens.std(axis=0, ddof=1) / math.sqrt(replicas), replicas)


def survival_single_seed(params: ModelParams, seed: int, t: float, replicas: int,
                         master_seed: int, threads: int | None = 1, tag: int = TAG_DEFAULT,
                         graph_factory: GraphFactory | None = None) -> tuple[float, float]:
    """Estimate ``P_seed(T_ext > t)`` with its binomial standard error."""
    if not (1 <= seed <= params.n):
        raise DomainError(f"seed must lie in 1..{params.n}")
    if t <= 0:
        return 1.0, 0.0
    cfg = SimConfig(t_max=t, record_grid=t, stop_on_extinction=True,
                    initial_condition=SingleSeed(seed))
    trajs = run_replicas(params, cfg, replicas, master_seed, threads, tag, seed, graph_factory)
    alive = np.array([tr.censored for tr in trajs], dtype=float)
    p = float(alive.mean())
    return p, math.sqrt(max(p * (1 - p), 0.0) / replicas)


@dataclass(frozen=True)
class ExtinctionSample:
    times: np.ndarray      # extinction time, or t_max when censored
    censored: np.ndarray   # bool

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean()) if self.censored.size else 0.0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("replica,t_ext,censored\n")
            for r, (t, c) in enumerate(zip(self.times, self.censored)):
                fh.write(f"{r},{t:.17g},{int(c)}\n")


def extinction_time(params: ModelParams, cfg: SimConfig, replicas: int, master_seed: int,
                    threads: int | None = 1, tag: int = TAG_DEFAULT, sub: int = 0,
                    graph_factory: GraphFactory | None = None) -> ExtinctionSample:
    """Per-replica extinction times with ``cfg.t_max`` as censoring bound."""
    if not cfg.stop_on_extinction:
        raise ConfigError("extinction_time requires stop_on_extinction")
    cfg = SimConfig(cfg.t_max, cfg.t_max, True, cfg.initial_condition, cfg.max_events)
    trajs = run_replicas(params, cfg, replicas, master_seed, threads, tag, sub, graph_factory)
    times = np.array([tr.extinction_time if tr.extinction_time is not None else cfg.t_max
                      for tr in trajs])
    cens = np.array([tr.extinction_time is None for tr in trajs])
    return ExtinctionSample(times, cens)
