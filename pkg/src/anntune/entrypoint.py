"""k-means entry-point selection and batched graph search.

A query entering the graph near its own neighborhood skips most of the
traversal, so we cluster the indexed vectors, snap each cluster mean to its
nearest database vector ("centroid"), and start each search from the
centroid whose mean is closest to the query.  Two batch drivers share one
search kernel: a per-query reference loop and a grouped gather/scatter
variant that searches each entry's queries together — their results are
identical element-wise.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .dataset import NeighborList, VectorSet
from .graph import (GraphIndex, SearchParams, _neighbor_lists,
                    _run_search_batch, search)

__all__ = [
    "EntryPointSelector",
    "batch_search_grouped",
    "batch_search_naive",
    "kmeans_fit",
    "select_entries",
    "select_entry",
]


@dataclasses.dataclass
class EntryPointSelector:
    """k-means means plus the node id of each cluster's nearest database
    vector.  ``objective`` records the Lloyd objective per iteration."""

    num_clusters: int
    means: np.ndarray
    centroid_ids: np.ndarray
    objective: np.ndarray

    def __post_init__(self):
        self.means = np.ascontiguousarray(self.means, dtype=np.float64)
        self.centroid_ids = np.ascontiguousarray(self.centroid_ids, dtype=np.int64)
        if self.means.shape[0] != self.num_clusters:
            raise ValueError("means row count must equal num_clusters")
        if self.centroid_ids.shape != (self.num_clusters,):
            raise ValueError("centroid_ids must have one entry per cluster")


def _sq_dists_to(x: np.ndarray, means: np.ndarray) -> np.ndarray:
    """(n, k) squared distances, float64."""
    xn = np.einsum("ij,ij->i", x, x)
    mn = np.einsum("ij,ij->i", means, means)
    return np.maximum(xn[:, None] + mn[None, :] - 2.0 * (x @ means.T), 0.0)


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    means = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    means[0] = x[first]
    d2 = np.einsum("ij,ij->i", x - means[0], x - means[0])
    for c in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            pick = int(rng.choice(n, p=d2 / total))
        else:
            # All remaining mass is on duplicates of chosen seeds; fall back
            # to the lowest unchosen index for determinism.
            pick = int(np.argmax(d2 == 0.0))
        means[c] = x[pick]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", x - means[c], x - means[c]))
    return means


def kmeans_fit(base: VectorSet, num_clusters: int, max_iters: int = 25,
               seed: int = 0) -> EntryPointSelector:
    """Lloyd's algorithm with k-means++ init, run to assignment fixpoint or
    ``max_iters``.

    Ties in assignment go to the lowest cluster index; an emptied cluster is
    re-seeded to the point farthest from its nearest mean.  ``centroid_ids``
    are exact nearest database vectors to the final means, ties by ascending
    id.  Deterministic for a fixed seed.
    """
    if not 1 <= num_clusters <= base.count:
        raise ValueError(f"num_clusters must be in [1, {base.count}], "
                         f"got {num_clusters}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    x = base.values.astype(np.float64)
    rng = np.random.default_rng(seed)
    means = _kmeanspp_init(x, num_clusters, rng)
    prev = None
    objective = []
    for _ in range(max_iters):
        d = _sq_dists_to(x, means)
        assign = d.argmin(axis=1)
        objective.append(float(d[np.arange(base.count), assign].sum()))
        empty = np.flatnonzero(np.bincount(assign, minlength=num_clusters) == 0)
        if empty.size:
            dmin = d.min(axis=1)
            for c in empty:
                p = int(np.argmax(dmin))
                means[c] = x[p]
                assign[p] = c
                dmin[p] = -1.0  # keep later re-seeds off the same point
        if prev is not None and np.array_equal(assign, prev):
            break
        for j in range(x.shape[1]):
            sums = np.bincount(assign, weights=x[:, j], minlength=num_clusters)
            counts = np.bincount(assign, minlength=num_clusters)
            means[:, j] = sums / np.maximum(counts, 1)
        prev = assign
    d = _sq_dists_to(x, means)
    centroid_ids = d.argmin(axis=0).astype(np.int64)
    return EntryPointSelector(num_clusters=num_clusters, means=means,
                              centroid_ids=centroid_ids,
                              objective=np.asarray(objective))


def select_entries(selector: EntryPointSelector, queries: np.ndarray) -> np.ndarray:
    """Entry node id per query row: nearest mean (ties by ascending cluster
    index) mapped through ``centroid_ids``."""
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != selector.means.shape[1]:
        raise ValueError(f"queries must be (n, {selector.means.shape[1]}), "
                         f"got shape {q.shape}")
    clusters = _sq_dists_to(q, selector.means).argmin(axis=1)
    return selector.centroid_ids[clusters]


def select_entry(selector: EntryPointSelector, query) -> int:
    """Entry node id for a single query vector."""
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1:
        raise ValueError("query must be a 1-D vector")
    return int(select_entries(selector, q[np.newaxis, :])[0])


def batch_search_naive(index: GraphIndex, selector: EntryPointSelector,
                       queries: VectorSet, params: SearchParams) -> list[NeighborList]:
    """Reference driver: per query, pick the entry then run one search."""
    results = []
    for i in range(queries.count):
        entry = select_entry(selector, queries.values[i])
        results.append(search(index, queries.values[i],
                              dataclasses.replace(params, entry=entry)))
    return results


def batch_search_grouped(index: GraphIndex, selector: EntryPointSelector,
                         queries: VectorSet, params: SearchParams) -> list[NeighborList]:
    """Gather/scatter driver: one entry pass, then one batched search per
    entry group (ascending entry id); results in original query order,
    element-wise identical to ``batch_search_naive``."""
    if queries.dim != index.base.dim:
        raise ValueError(f"dim mismatch: index {index.base.dim}, "
                         f"queries {queries.dim}")
    if params.k > index.base.count:
        raise ValueError(f"k={params.k} exceeds database size {index.base.count}")
    if queries.count == 0:
        return []
    entries = select_entries(selector, queries.values)
    out_ids = np.empty((queries.count, params.k), dtype=np.int64)
    out_d = np.empty((queries.count, params.k), dtype=np.float64)
    for entry in np.unique(entries):
        sel = np.flatnonzero(entries == entry)
        grp_ids, grp_d = _run_search_batch(
            index, np.ascontiguousarray(queries.values[sel]),
            np.full(sel.size, entry, dtype=np.int64),
            params.k, params.pool_size)
        out_ids[sel] = grp_ids
        out_d[sel] = grp_d
    return _neighbor_lists(index, out_ids, out_d)
