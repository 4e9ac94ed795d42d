"""NSG-style proximity graph: bounded-degree build plus best-first search.

Build pipeline: kNN candidate rows (exact at desk scale, NN-descent above
``EXACT_KNN_THRESHOLD``) → MRNG edge selection → default entry at the node
nearest the dataset mean → BFS connectivity repair.  Search maintains a
sorted candidate pool of ``pool_size`` (distance, id) pairs and stops when
the closest unexpanded candidate is farther than the worst retained pool
member.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from ._kernels import (_GEMM_TOL, _bfs_reached, _mrng_prune, _nnd_init_rows,
                       _nnd_round, _search_batch, _sqd)
from .dataset import NeighborList, VectorSet, all_pairs_knn

__all__ = [
    "DEFAULT_BUILD_POOL",
    "DEFAULT_MAX_DEGREE",
    "EXACT_KNN_THRESHOLD",
    "GraphIndex",
    "SearchParams",
    "build_index",
    "search",
    "set_entry_point",
]

DEFAULT_MAX_DEGREE = 32
DEFAULT_BUILD_POOL = 48
# Above this count the kNN graph comes from NN-descent instead of exact
# brute force.
EXACT_KNN_THRESHOLD = 200_000


@dataclasses.dataclass
class SearchParams:
    """Search-time knobs: result count, candidate pool width, entry override."""

    k: int = 10
    pool_size: int = 100
    entry: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.pool_size < self.k:
            raise ValueError(
                f"pool_size must be >= k, got pool_size={self.pool_size} k={self.k}")


@dataclasses.dataclass
class GraphIndex:
    """Adjacency-list proximity graph over a ``VectorSet``.

    ``offsets``/``neighbors`` form a CSR adjacency of node positions;
    ``repaired`` lists nodes whose degree exceeds ``max_degree`` by one due
    to connectivity repair.  Node ids are row positions in ``base``;
    search results are mapped through ``base.ids`` when present.
    """

    base: VectorSet
    offsets: np.ndarray
    neighbors: np.ndarray
    max_degree: int
    default_entry: int
    repaired: np.ndarray

    def __post_init__(self):
        self.offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        self.neighbors = np.ascontiguousarray(self.neighbors, dtype=np.int32)
        self.repaired = np.ascontiguousarray(self.repaired, dtype=np.int64)
        n = self.base.count
        if self.offsets.shape != (n + 1,) or self.offsets[-1] != self.neighbors.size:
            raise ValueError("offsets do not index the neighbor array")
        if n > 0 and not 0 <= self.default_entry < n:
            raise ValueError(f"default_entry {self.default_entry} out of range")

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    def neighbors_of(self, node: int) -> np.ndarray:
        return self.neighbors[self.offsets[node]:self.offsets[node + 1]]


def _nearest_to_mean(values: np.ndarray) -> int:
    """Position of the vector closest to the dataset mean (medoid-like)."""
    mean = values.mean(axis=0, dtype=np.float64)
    best_d = np.inf
    best_i = 0
    for s in range(0, values.shape[0], 65536):
        block = values[s:s + 65536].astype(np.float64) - mean
        d = np.einsum("ij,ij->i", block, block)
        i = int(np.argmin(d))
        if d[i] < best_d:
            best_d = float(d[i])
            best_i = s + i
    return best_i


def _nn_descent(values: np.ndarray, kk: int, seed: int,
                max_rounds: int = 10, tol_frac: float = 0.002):
    """Approximate kNN rows via NN-descent with new/old local joins."""
    n = values.shape[0]
    rng = np.random.default_rng([seed, 0x6E6E64])
    ids = rng.integers(0, n - 1, size=(n, kk), dtype=np.int64)
    ids[ids >= np.arange(n, dtype=np.int64)[:, None]] += 1
    dists = np.empty((n, kk), dtype=np.float64)
    _nnd_init_rows(values, ids, dists)
    flags = np.ones((n, kk), dtype=np.uint8)
    fn_ids = np.empty((n, kk), dtype=np.int64)
    fo_ids = np.empty((n, kk), dtype=np.int64)
    rn_ids = np.empty((n, kk), dtype=np.int64)
    ro_ids = np.empty((n, kk), dtype=np.int64)
    fn_cnt = np.empty(n, dtype=np.int64)
    fo_cnt = np.empty(n, dtype=np.int64)
    rn_cnt = np.empty(n, dtype=np.int64)
    ro_cnt = np.empty(n, dtype=np.int64)
    list_n = np.empty(2 * kk, dtype=np.int64)
    list_o = np.empty(2 * kk, dtype=np.int64)
    for _ in range(max_rounds):
        updates = _nnd_round(values, ids, dists, flags,
                             fn_ids, fn_cnt, fo_ids, fo_cnt,
                             rn_ids, rn_cnt, ro_ids, ro_cnt,
                             list_n, list_o)
        if updates <= tol_frac * n * kk:
            break
    return ids, dists


def _assemble_csr(adj: np.ndarray, deg: np.ndarray):
    offsets = np.zeros(adj.shape[0] + 1, dtype=np.int64)
    np.cumsum(deg, out=offsets[1:])
    flat = adj[adj >= 0].astype(np.int32)
    return offsets, flat


def _weak_components(unreached: np.ndarray, offsets: np.ndarray,
                     flat: np.ndarray) -> list[np.ndarray]:
    """Weakly-connected components of the subgraph induced on ``unreached``."""
    n = offsets.size - 1
    deg = np.diff(offsets)
    order = np.argsort(flat, kind="stable")
    rev_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(flat, minlength=n), out=rev_offsets[1:])
    rev_flat = np.repeat(np.arange(n, dtype=np.int64), deg)[order]
    pending = set(int(u) for u in unreached)
    comps = []
    for u in unreached:
        u = int(u)
        if u not in pending:
            continue
        pending.remove(u)
        comp = [u]
        stack = [u]
        while stack:
            x = stack.pop()
            for nb in flat[offsets[x]:offsets[x + 1]]:
                nb = int(nb)
                if nb in pending:
                    pending.remove(nb)
                    comp.append(nb)
                    stack.append(nb)
            for nb in rev_flat[rev_offsets[x]:rev_offsets[x + 1]]:
                nb = int(nb)
                if nb in pending:
                    pending.remove(nb)
                    comp.append(nb)
                    stack.append(nb)
        comps.append(np.array(sorted(comp), dtype=np.int64))
    return comps


def _closest_cross_pair(values: np.ndarray, comp: np.ndarray,
                        allowed: np.ndarray) -> tuple[int, int]:
    """(member, reached) pair minimizing exact distance, ties by ascending
    (distance, member id, reached id).

    Candidates come from float32 GEMM blocks (expanded form with the same
    tolerance slack as the kNN oracle); the winner is decided on exact
    ``_sqd`` distances, so the GEMM is only ever a safe pre-filter.
    """
    cv = values[comp]
    cn2 = np.einsum("ij,ij->i", cv.astype(np.float64), cv.astype(np.float64))
    cn2_32 = cn2.astype(np.float32)
    c_max = float(cn2.max())
    best = (np.inf, -1, -1)
    chunk = max(1, int(4e6 // max(len(comp), 1)))
    for s in range(0, allowed.size, chunk):
        block = allowed[s:s + chunk]
        rv = values[block]
        rn2 = np.einsum("ij,ij->i", rv.astype(np.float64),
                        rv.astype(np.float64))
        d32 = cn2_32[:, None] + rn2.astype(np.float32)[None, :] \
            - 2.0 * (cv @ rv.T)
        tol = _GEMM_TOL * (c_max + float(rn2.max())) + 1e-12
        mi, ri = np.nonzero(d32 <= d32.min() + tol)
        for a, b in zip(mi, ri):
            cand = (_sqd(values, int(comp[a]), values[block[b]]),
                    int(comp[a]), int(block[b]))
            if cand < best:
                best = cand
    return best[1], best[2]


def _repair_connectivity(values: np.ndarray, offsets: np.ndarray,
                         flat: np.ndarray, entry: int, max_degree: int):
    """Append nearest-cross-component edges until BFS from ``entry`` reaches
    every node.  Each repair edge goes from a reached node (degree allowed to
    grow to max_degree + 1, flagged) to the unreached component's closest
    member."""
    n = values.shape[0]
    extras: dict[int, list[int]] = {}
    flagged: set[int] = set()

    def merged():
        if not extras:
            return offsets, flat
        deg = np.diff(offsets)
        extra_deg = np.zeros(n, dtype=np.int64)
        for u, lst in extras.items():
            extra_deg[u] = len(lst)
        new_offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(deg + extra_deg, out=new_offsets[1:])
        new_flat = np.empty(new_offsets[-1], dtype=np.int32)
        for u in range(n):
            a = new_offsets[u]
            b = a + deg[u]
            new_flat[a:b] = flat[offsets[u]:offsets[u + 1]]
            if extra_deg[u]:
                new_flat[b:b + extra_deg[u]] = extras[u]
        return new_offsets, new_flat

    while True:
        cur_offsets, cur_flat = merged()
        reached = np.zeros(n, dtype=np.uint8)
        cnt = _bfs_reached(cur_offsets, cur_flat, entry, reached)
        if cnt == n:
            return cur_offsets, cur_flat, np.array(sorted(flagged), dtype=np.int64)
        unreached = np.flatnonzero(reached == 0)
        comps = _weak_components(unreached, cur_offsets, cur_flat)
        deg = np.diff(cur_offsets).copy()
        reached_idx = np.flatnonzero(reached)
        for comp in comps:
            allowed = reached_idx[deg[reached_idx] <= max_degree]
            if allowed.size == 0:  # pragma: no cover - every node repaired
                allowed = reached_idx
            member, anchor = _closest_cross_pair(values, comp, allowed)
            extras.setdefault(anchor, []).append(member)
            deg[anchor] += 1
            if deg[anchor] > max_degree:
                flagged.add(anchor)


def build_index(base: VectorSet, max_degree: int = DEFAULT_MAX_DEGREE,
                build_pool: int = DEFAULT_BUILD_POOL, seed: int = 0,
                exact_threshold: int = EXACT_KNN_THRESHOLD) -> GraphIndex:
    """Build the proximity graph.

    ``build_pool`` is the kNN candidate row width feeding MRNG selection
    (clamped to count - 1).  Deterministic for a fixed seed; the seed only
    matters on the NN-descent path.
    """
    if base.count < 2:
        raise ValueError(f"build_index needs at least 2 vectors, got {base.count}")
    if max_degree < 1:
        raise ValueError(f"max_degree must be >= 1, got {max_degree}")
    if build_pool < max_degree:
        raise ValueError(f"build_pool ({build_pool}) must be >= max_degree "
                         f"({max_degree})")
    kk = min(build_pool, base.count - 1)
    if base.count <= exact_threshold:
        knn_ids, knn_d = all_pairs_knn(base, kk)
    else:
        knn_ids, knn_d = _nn_descent(base.values, kk, seed)
    adj, deg = _mrng_prune(base.values, knn_ids, knn_d, max_degree)
    entry = _nearest_to_mean(base.values)
    offsets, flat = _assemble_csr(adj, deg)
    offsets, flat, repaired = _repair_connectivity(
        base.values, offsets, flat, entry, max_degree)
    return GraphIndex(base=base, offsets=offsets, neighbors=flat,
                      max_degree=max_degree, default_entry=entry,
                      repaired=repaired)


def _run_search_batch(index: GraphIndex, queries: np.ndarray,
                      entries: np.ndarray, k: int, pool_size: int):
    """Raw batched kernel call; returns (positions, distances) with -1/inf
    padding for unreachable slots."""
    nq = queries.shape[0]
    out_ids = np.empty((nq, k), dtype=np.int64)
    out_d = np.empty((nq, k), dtype=np.float64)
    visited = np.zeros(index.base.count, dtype=np.int64)
    _search_batch(index.base.values, index.offsets, index.neighbors,
                  queries, entries, k, pool_size, out_ids, out_d, visited)
    return out_ids, out_d


def _neighbor_lists(index: GraphIndex, out_ids: np.ndarray,
                    out_d: np.ndarray) -> list[NeighborList]:
    """Trim padding and map node positions to original database ids."""
    results = []
    base_ids = index.base.ids
    for row_ids, row_d in zip(out_ids, out_d):
        m = int(np.searchsorted(row_d, np.inf)) if row_ids[-1] < 0 else len(row_ids)
        ids = row_ids[:m]
        results.append(NeighborList(
            base_ids[ids] if base_ids is not None else ids.copy(),
            row_d[:m].copy()))
    return results


def search(index: GraphIndex, query, params: SearchParams) -> NeighborList:
    """Best-first search from ``params.entry`` (default: index default entry).

    Returns the top ``params.k`` visited nodes by (distance, id); distances
    are exactly recomputable from the stored vectors.
    """
    q = np.ascontiguousarray(np.asarray(query, dtype=np.float32))
    if q.ndim != 1 or q.shape[0] != index.base.dim:
        raise ValueError(f"query must be a vector of dim {index.base.dim}, "
                         f"got shape {q.shape}")
    if params.k > index.base.count:
        raise ValueError(f"k={params.k} exceeds database size {index.base.count}")
    entry = index.default_entry if params.entry is None else int(params.entry)
    if not 0 <= entry < index.base.count:
        raise ValueError(f"entry point {entry} out of range [0, {index.base.count})")
    out_ids, out_d = _run_search_batch(
        index, q[np.newaxis, :], np.array([entry], dtype=np.int64),
        params.k, params.pool_size)
    return _neighbor_lists(index, out_ids, out_d)[0]


def set_entry_point(index: GraphIndex, node: int) -> None:
    """Make subsequent searches without an explicit entry start at ``node``."""
    node = int(node)
    if not 0 <= node < index.base.count:
        raise ValueError(f"entry point {node} out of range [0, {index.base.count})")
    index.default_entry = node
