"""Fully materialised evolving network with vertex-updating dynamics.

Adjacency lives in one pooled ``int32`` array. Vertex ``v`` (0-based internally)
owns the block ``nbr[start[v] : start[v] + cap[v]]`` of which the first
``deg[v]`` entries are used. ``twin[k]`` is the pool position of the reverse
entry of the edge stored at ``k``, which makes edge deletion O(1) by
swap-with-last. Full blocks are relocated to the end of the pool with doubled
capacity and the pool is compacted when it runs out.

Neighbour sampling uses geometric skipping over index blocks ``[2^m, 2^(m+1))``
with the block's largest probability as envelope, then thinning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import CapacityError, ConsistencyError, DomainError
from .params import KernelKind, ModelParams, mean_degree

KIND_FACTOR = 0
KIND_PA = 1


def kind_code(params: ModelParams) -> int:
    return KIND_FACTOR if params.kernel.kind is KernelKind.FACTOR else KIND_PA


# --------------------------------------------------------------------------
# numba kernels (vertex ids are 0-based; rank of vertex v is (v+1)/n)


@nb.njit(cache=True, inline="always")
def _pij(kind, beta, gamma, n, i, j):
    x = (i + 1.0) / n
    y = (j + 1.0) / n
    if kind == 0:
        v = beta * (x ** (-gamma) * y ** (-gamma)) / n
    else:
        lo = min(x, y)
        hi = max(x, y)
        v = beta * lo ** (-gamma) * hi ** (gamma - 1.0) / n
    return min(v, 1.0)


@nb.njit(cache=True, nogil=True)
def _sample_range(kind, beta, gamma, n, i, lo, hi, rng, out, count):
    """Append to ``out`` each ``j`` in ``[lo, hi]`` (0-based, ``j != i``)
    independently with probability ``p_ij``; return the new count."""
    j0 = lo
    while j0 <= hi:
        r = j0 + 1  # 1-based rank index; blocks are [2^m, 2^(m+1)) in it
        b = 1
        while b * 2 <= r:
            b *= 2
        blk_end = min(2 * b - 2, hi)  # last 0-based index of this block
        q = _pij(kind, beta, gamma, n, i, j0)
        if q >= 1.0:
            for j in range(j0, blk_end + 1):
                if j != i:
                    p = _pij(kind, beta, gamma, n, i, j)
                    if p >= 1.0 or rng.random() < p:
                        if count >= out.shape[0]:
                            return -1
                        out[count] = j
                        count += 1
        elif q > 0.0:
            logq = math.log1p(-q)
            j = j0 - 1
            while True:
                u = rng.random()
                skip = math.floor(math.log1p(-u) / logq)
                if j + 1 + skip > blk_end:
                    break
                j = j + 1 + int(skip)
                if j != i:
                    p = _pij(kind, beta, gamma, n, i, j)
                    if rng.random() * q < p:
                        if count >= out.shape[0]:
                            return -1
                        out[count] = j
                        count += 1
        j0 = blk_end + 1
    return count


@nb.njit(cache=True, nogil=True)
def _compact(nbr, twin, start, deg, cap, meta):
    order = np.argsort(start)
    ptr = 0
    for idx in range(order.shape[0]):
        v = order[idx]
        s = start[v]
        if s != ptr:
            for k in range(deg[v]):
                src = s + k
                dst = ptr + k
                nbr[dst] = nbr[src]
                t = twin[src]
                twin[dst] = t
                twin[t] = dst
            start[v] = ptr
        ptr += cap[v]
    meta[0] = ptr


@nb.njit(cache=True, nogil=True)
def _ensure_room(nbr, twin, start, deg, cap, meta, v):
    """Guarantee one free slot in ``v``'s block; 0 on success, -1 if full."""
    if deg[v] < cap[v]:
        return 0
    newcap = 2 * cap[v]
    if meta[0] + newcap > nbr.shape[0]:
        _compact(nbr, twin, start, deg, cap, meta)
        if meta[0] + newcap > nbr.shape[0]:
            return -1
    s_old = start[v]
    s_new = meta[0]
    for k in range(deg[v]):
        nbr[s_new + k] = nbr[s_old + k]
        t = twin[s_old + k]
        twin[s_new + k] = t
        twin[t] = s_new + k
    start[v] = s_new
    cap[v] = newcap
    meta[0] += newcap
    return 0


@nb.njit(cache=True, nogil=True)
def _add_edge(nbr, twin, start, deg, cap, meta, i, j):
    if _ensure_room(nbr, twin, start, deg, cap, meta, i) < 0:
        return -1
    if _ensure_room(nbr, twin, start, deg, cap, meta, j) < 0:
        return -1
    pi = start[i] + deg[i]
    pj = start[j] + deg[j]
    nbr[pi] = j
    nbr[pj] = i
    twin[pi] = pj
    twin[pj] = pi
    deg[i] += 1
    deg[j] += 1
    meta[1] += 1
    return 0


@nb.njit(cache=True, inline="always")
def _remove_entry(nbr, twin, start, deg, j, t):
    """Delete the entry at pool position ``t`` from ``j``'s block."""
    last = start[j] + deg[j] - 1
    if t != last:
        nbr[t] = nbr[last]
        tw = twin[last]
        twin[t] = tw
        twin[tw] = t
    deg[j] -= 1


@nb.njit(cache=True, nogil=True)
def _init_graph(kind, beta, gamma, n, nbr, twin, start, deg, cap, meta, rng, buf):
    for i in range(n - 1):
        c = _sample_range(kind, beta, gamma, n, i, i + 1, n - 1, rng, buf, 0)
        if c < 0:
            return -2
        for k in range(c):
            if _add_edge(nbr, twin, start, deg, cap, meta, i, buf[k]) < 0:
                return -1
    return 0


@nb.njit(cache=True, nogil=True)
def _vertex_update(kind, beta, gamma, n, nbr, twin, start, deg, cap, meta, i, rng,
                   removed, added):
    """Resample all edges of ``i``. Fills ``removed``/``added`` and returns
    ``(n_removed, n_added)``; ``n_added < 0`` signals a capacity failure."""
    nrem = deg[i]
    if nrem > removed.shape[0]:
        return nrem, -2
    s = start[i]
    for k in range(nrem):
        j = nbr[s + k]
        removed[k] = j
        _remove_entry(nbr, twin, start, deg, j, twin[s + k])
    deg[i] = 0
    meta[1] -= nrem
    c = _sample_range(kind, beta, gamma, n, i, 0, n - 1, rng, added, 0)
    if c < 0:
        return nrem, -2
    for k in range(c):
        if _add_edge(nbr, twin, start, deg, cap, meta, i, added[k]) < 0:
            return nrem, -1
    return nrem, c


@nb.njit(cache=True, nogil=True)
def _sample_neighbors(kind, beta, gamma, n, i, rng, out):
    c = _sample_range(kind, beta, gamma, n, i, 0, n - 1, rng, out, 0)
    return c


# --------------------------------------------------------------------------
# Python-facing state


@dataclass
class GraphState:
    """Mutable adjacency of the evolving network (one per simulation run)."""

    n: int
    kind: int
    beta: float
    gamma: float
    nbr: np.ndarray    # int32 pool of neighbour ids
    twin: np.ndarray   # int64 reverse-entry positions
    start: np.ndarray  # int64 block starts
    deg: np.ndarray    # int32 degrees
    cap: np.ndarray    # int64 block capacities
    meta: np.ndarray   # int64 [free pointer, edge count]
    scratch: np.ndarray  # int32 buffer for sampled neighbours
    removed: np.ndarray  # int32 buffer for dropped neighbours

    @property
    def edge_count(self) -> int:
        return int(self.meta[1])

    def degree(self, v: int) -> int:
        """Degree of 1-based vertex ``v``."""
        return int(self.deg[v - 1])

    def neighbors(self, v: int) -> np.ndarray:
        """Sorted 1-based neighbours of 1-based vertex ``v``."""
        s = self.start[v - 1]
        return np.sort(self.nbr[s:s + self.deg[v - 1]].astype(np.int64)) + 1

    def edges(self) -> np.ndarray:
        """All edges as an ``(m, 2)`` array of 1-based pairs with ``i < j``, sorted."""
        out = []
        for v in range(self.n):
            s = self.start[v]
            nb_ = self.nbr[s:s + self.deg[v]].astype(np.int64)
            nb_ = nb_[nb_ > v]
            if nb_.size:
                out.append(np.column_stack([np.full(nb_.size, v), nb_]))
        if not out:
            return np.zeros((0, 2), dtype=np.int64)
        e = np.concatenate(out) + 1
        return e[np.lexsort((e[:, 1], e[:, 0]))]

    def check_consistency(self) -> None:
        """Verify symmetry, twin links, absence of loops/duplicates and the edge count."""
        total = 0
        for v in range(self.n):
            s, d = int(self.start[v]), int(self.deg[v])
            if d > self.cap[v]:
                raise ConsistencyError(f"vertex {v + 1}: degree exceeds capacity")
            nb_ = self.nbr[s:s + d]
            if np.any(nb_ == v):
                raise ConsistencyError(f"self-loop at {v + 1}")
            if np.unique(nb_).size != d:
                raise ConsistencyError(f"duplicate neighbour at {v + 1}")
            for k in range(s, s + d):
                t = int(self.twin[k])
                j = int(self.nbr[k])
                if not (self.start[j] <= t < self.start[j] + self.deg[j]) or self.nbr[t] != v \
                        or self.twin[t] != k:
                    raise ConsistencyError(f"broken reverse entry for edge {v + 1}-{j + 1}")
            total += d
        if total != 2 * self.meta[1]:
            raise ConsistencyError(f"edge count {self.meta[1]} vs recount {total // 2}")


def _initial_capacity(params: ModelParams) -> np.ndarray:
    ranks = np.arange(1, params.n + 1, dtype=float) / params.n
    m = np.minimum(mean_degree(params.kernel, ranks), params.n - 1)
    return (m + 8.0 * np.sqrt(m) + 16.0).astype(np.int64)


def empty_graph(params: ModelParams, pool_factor: float = 2.0) -> GraphState:
    cap = _initial_capacity(params)
    start = np.zeros(params.n, dtype=np.int64)
    start[1:] = np.cumsum(cap)[:-1]
    used = int(cap.sum())
    pool = int(pool_factor * used) + 1024
    max_deg = params.n
    return GraphState(
        n=params.n, kind=KIND_FACTOR if params.kernel.kind is KernelKind.FACTOR else KIND_PA,
        beta=params.kernel.beta, gamma=params.gamma,
        nbr=np.zeros(pool, dtype=np.int32), twin=np.zeros(pool, dtype=np.int64),
        start=start, deg=np.zeros(params.n, dtype=np.int32), cap=cap,
        meta=np.array([used, 0], dtype=np.int64),
        scratch=np.zeros(max_deg, dtype=np.int32), removed=np.zeros(max_deg, dtype=np.int32))


def _raise_capacity(code: int):
    if code == -1:
        raise CapacityError("adjacency pool exhausted; increase pool_factor")
    if code == -2:
        raise CapacityError("neighbour buffer exhausted")


def init_stationary(params: ModelParams, rng: np.random.Generator,
                    pool_factor: float = 2.0) -> GraphState:
    """Draw the graph from its stationary law: independent Bernoulli(p_ij) edges."""
    g = empty_graph(params, pool_factor)
    code = _init_graph(g.kind, g.beta, g.gamma, g.n, g.nbr, g.twin, g.start, g.deg, g.cap,
                       g.meta, rng, g.scratch)
    _raise_capacity(code)
    return g


def graph_from_edges(params: ModelParams, edges, pool_factor: float = 2.0) -> GraphState:
    """Build a graph with a prescribed 1-based edge list (for tests and frozen graphs)."""
    g = empty_graph(params, pool_factor)
    seen = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j or not (1 <= i <= params.n and 1 <= j <= params.n):
            raise DomainError(f"invalid edge ({i},{j})")
        key = (min(i, j), max(i, j))
        if key in seen:
            continue
        seen.add(key)
        _raise_capacity(_add_edge(g.nbr, g.twin, g.start, g.deg, g.cap, g.meta, i - 1, j - 1))
    return g


def sample_neighbors(params: ModelParams, i: int, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli(p_ij) sample over ``j != i``; sorted 1-based ids."""
    if not (1 <= i <= params.n):
        raise DomainError(f"vertex index must lie in 1..{params.n}")
    out = np.zeros(params.n, dtype=np.int32)
    c = _sample_neighbors(kind_code(params), params.kernel.beta, params.gamma, params.n,
                          i - 1, rng, out)
    return np.sort(out[:c].astype(np.int64)) + 1


def apply_vertex_update(state: GraphState, i: int, rng: np.random.Generator):
    """Replace all edges of 1-based vertex ``i`` by a fresh sample.

    Returns ``(removed, added)`` as sorted 1-based neighbour arrays.
    """
    if not (1 <= i <= state.n):
        raise DomainError(f"vertex index must lie in 1..{state.n}")
    nrem, nadd = _vertex_update(state.kind, state.beta, state.gamma, state.n, state.nbr,
                                state.twin, state.start, state.deg, state.cap, state.meta,
                                i - 1, rng, state.removed, state.scratch)
    _raise_capacity(nadd if nadd < 0 else 0)
    rem = np.sort(state.removed[:nrem].astype(np.int64)) + 1
    add = np.sort(state.scratch[:nadd].astype(np.int64)) + 1
    return rem, add


def expected_edge_count(params: ModelParams) -> float:
    """Exact ``sum_{i<j} p_ij`` (O(N^2) memory-light loop over rows)."""
    n = params.n
    ranks = np.arange(1, n + 1, dtype=float) / n
    g, b = params.gamma, params.kernel.beta
    total = 0.0
    for i in range(n - 1):
        x = ranks[i]
        y = ranks[i + 1:]
        if params.kernel.kind is KernelKind.FACTOR:
            p = b * x ** (-g) * y ** (-g) / n
        else:
            p = b * x ** (-g) * y ** (g - 1.0) / n
        total += float(np.minimum(p, 1.0).sum())
    return total


def write_edge_csv(state: GraphState, path) -> None:
    """Export the edge list as CSV with header ``i,j`` (1-based, ``i < j``)."""
    e = state.edges()
    with open(path, "w", newline="\n") as fh:
        fh.write("i,j\n")
        for i, j in e:
            fh.write(f"{i},{j}\n")
