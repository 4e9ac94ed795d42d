"""Shared test helpers: independent oracles coded with none of the package's
kernels (full-sort brute force, plain-Python graph traversal) plus small
dataset factories.  Tests compare package output against these."""

from __future__ import annotations

import numpy as np

from anntune.dataset import VectorSet


def oracle_knn(base: np.ndarray, queries: np.ndarray, k: int):
    """Full-sort exact kNN oracle, float64 broadcasting + lexsort.

    Returns (ids, dists) arrays of shape (nq, k), ordered by (distance, id)
    ascending.  Independent of the package's heap/GEMM-refinement path.
    """
    b = np.asarray(base, dtype=np.float64)
    q = np.asarray(queries, dtype=np.float64)
    ids = np.empty((q.shape[0], k), dtype=np.int64)
    dists = np.empty((q.shape[0], k), dtype=np.float64)
    for i in range(q.shape[0]):
        diff = b - q[i]
        d = np.einsum("ij,ij->i", diff, diff)
        order = np.lexsort((np.arange(b.shape[0]), d))
        ids[i] = order[:k]
        dists[i] = d[order[:k]]
    return ids, dists


def oracle_sqdist(u: np.ndarray, v: np.ndarray) -> float:
    """Sequential float64 squared distance, the package's reported metric."""
    total = 0.0
    for a, b in zip(np.asarray(u, dtype=np.float64),
                    np.asarray(v, dtype=np.float64)):
        diff = a - b
        total += diff * diff
    return total


def reference_search(vectors: np.ndarray, neighbors_of, entry: int,
                     query: np.ndarray, k: int, pool_size: int):
    """Plain-Python best-first search with the documented semantics:

    sorted (distance, id) pool capped at pool_size, expand the closest
    unexpanded member, stop when no unexpanded member remains in the pool,
    return the top k.
    Nodes evicted from the pool (expanded or not) never re-enter: each node
    is scored at most once.
    """
    pool = [(oracle_sqdist(vectors[entry], query), entry)]
    expanded = set()
    seen = {entry}
    while True:
        unexpanded = [p for p in pool if p[1] not in expanded]
        if not unexpanded:
            break
        best = min(unexpanded)
        expanded.add(best[1])
        for nb in neighbors_of(best[1]):
            nb = int(nb)
            if nb in seen:
                continue
            seen.add(nb)
            pool.append((oracle_sqdist(vectors[nb], query), nb))
        pool.sort()
        del pool[pool_size:]
    top = pool[:k]
    return ([node for _, node in top],
            [dist for dist, _ in top])


def make_uniform(n: int, dim: int, seed: int = 0) -> VectorSet:
    rng = np.random.default_rng(seed)
    return VectorSet(rng.random((n, dim), dtype=np.float32))


def make_gaussian(n: int, dim: int, seed: int = 0) -> VectorSet:
    rng = np.random.default_rng(seed)
    return VectorSet(rng.standard_normal((n, dim)).astype(np.float32))


def ids_matrix(results) -> np.ndarray:
    return np.stack([r.ids for r in results])


def dists_matrix(results) -> np.ndarray:
    return np.stack([r.distances for r in results])
