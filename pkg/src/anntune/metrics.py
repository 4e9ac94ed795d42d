"""Recall@k, QPS, and the analytic index memory footprint.

Recall@k = |R ∩ R̂| / k averaged over queries, membership by id only.
QPS times whole batches on a monotonic clock, with one untimed warm-up
pass; the measured callable is expected to contain every query-side
stage that is configured (PCA transform, entry selection, search).
"""

from __future__ import annotations

import dataclasses
import json
import time
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .dataset import NeighborList, VectorSet

if TYPE_CHECKING:  # pragma: no cover
    from .entrypoint import EntryPointSelector
    from .graph import GraphIndex
    from .pca import PcaModel

__all__ = [
    "BenchReport",
    "INDEX_HEADER_BYTES",
    "PCA_HEADER_BYTES",
    "SELECTOR_HEADER_BYTES",
    "measure_qps",
    "memory_estimate",
    "recall_at_k",
]

# Fixed header charges of the analytic memory model (see memory_estimate).
INDEX_HEADER_BYTES = 64
PCA_HEADER_BYTES = 16
SELECTOR_HEADER_BYTES = 16


@dataclasses.dataclass
class BenchReport:
    """One benchmark sample of a search configuration."""

    recall_at_k: float
    qps: float
    memory_bytes: int
    repeats: int
    k: int

    def to_dict(self) -> dict:
        return {
            "recall_at_k": self.recall_at_k,
            "qps": self.qps,
            "memory_bytes": self.memory_bytes,
            "repeats": self.repeats,
            "k": self.k,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def from_dict(obj: dict) -> "BenchReport":
        return BenchReport(
            recall_at_k=float(obj["recall_at_k"]),
            qps=float(obj["qps"]),
            memory_bytes=int(obj["memory_bytes"]),
            repeats=int(obj["repeats"]),
            k=int(obj["k"]),
        )


def recall_at_k(ground_truth: Sequence[NeighborList],
                results: Sequence[NeighborList], k: int) -> float:
    """Mean over queries of |top-k(truth) ∩ top-k(result)| / k, ids only."""
    if len(ground_truth) != len(results):
        raise ValueError(f"list length mismatch: {len(ground_truth)} ground-truth "
                         f"vs {len(results)} result lists")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    total = 0
    for truth, got in zip(ground_truth, results):
        if len(truth) < k or len(got) < k:
            raise ValueError(f"every list needs at least k={k} entries")
        total += np.intersect1d(truth.ids[:k], got.ids[:k]).size
    return total / (k * len(results)) if results else 1.0


def measure_qps(search: Callable[[VectorSet], object], queries: VectorSet,
                repeats: int = 10) -> float:
    """(repeats × queries.count) / total seconds over ``repeats`` timed
    batch calls, after one untimed warm-up call."""
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    if queries.count == 0:
        raise ValueError("cannot measure QPS with zero queries")
    search(queries)
    t0 = time.perf_counter()
    for _ in range(repeats):
        search(queries)
    elapsed = time.perf_counter() - t0
    return (repeats * queries.count) / elapsed


def memory_estimate(index: "GraphIndex", pca: "PcaModel | None" = None,
                    selector: "EntryPointSelector | None" = None) -> int:
    """Deterministic single-precision deployment footprint in bytes.

    Closed formula::

        INDEX_HEADER_BYTES
        + count * dim * 4            (vectors, float32)
        + count * 8                  (adjacency offsets, int64)
        + total_edges * 4            (flat neighbor ids, int32)
        + [ (d0 + d0 * d) * 4 + PCA_HEADER_BYTES ]           (if pca)
        + [ (clusters * dim + clusters) * 4 + SELECTOR_HEADER_BYTES ]
                                                             (if selector)

    An empty index therefore costs the fixed header only.  This is an
    analytic estimate, not an RSS sample.
    """
    total = INDEX_HEADER_BYTES
    total += index.base.count * index.base.dim * 4
    total += index.base.count * 8
    total += int(index.neighbors.size) * 4
    if pca is not None:
        total += (pca.d0 + pca.d0 * pca.d) * 4 + PCA_HEADER_BYTES
    if selector is not None:
        clusters, dim = selector.means.shape
        total += (clusters * dim + clusters) * 4 + SELECTOR_HEADER_BYTES
    return total
