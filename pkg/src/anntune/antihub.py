"""Hubness-based database subsampling.

The k-occurrence N_k(x) counts how many database points list x among their
kHub exact nearest neighbors (self excluded).  Antihubs — points with the
smallest counts — contribute least to other points' neighborhoods and are
removed first when shrinking the database to a ratio alpha.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .dataset import VectorSet, all_pairs_knn

__all__ = ["HubnessProfile", "antihub_subsample", "k_occurrence"]


@dataclasses.dataclass
class HubnessProfile:
    """Per-row k-occurrence counts of the set the profile was built on."""

    counts: np.ndarray
    k_hub: int

    def __post_init__(self):
        self.counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 1:
            raise ValueError("counts must be 1-D")
        if self.k_hub < 1:
            raise ValueError(f"k_hub must be positive, got {self.k_hub}")


def k_occurrence(base: VectorSet, k_hub: int) -> HubnessProfile:
    """Exact k-occurrence profile: counts[x] = |{y != x : x in kNN(y, k_hub)}|.

    Built from brute-force neighbor rows with ascending-id tie-breaks, so
    sum(counts) == k_hub * count exactly.
    """
    if not 1 <= k_hub < base.count:
        raise ValueError(f"k_hub must be in [1, count-1] = [1, {base.count - 1}], "
                         f"got {k_hub}")
    ids, _ = all_pairs_knn(base, k_hub)
    counts = np.bincount(ids.ravel(), minlength=base.count)
    return HubnessProfile(counts=counts, k_hub=k_hub)


def antihub_subsample(base: VectorSet, profile: HubnessProfile,
                      alpha: float) -> VectorSet:
    """Keep the ceil(alpha * count) rows with the largest k-occurrence.

    Ties are kept by ascending id; output preserves the original row order
    and carries original database ids.  ``alpha=1`` is the identity.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if profile.counts.shape != (base.count,):
        raise ValueError(
            f"profile was built on {profile.counts.shape[0]} rows, "
            f"base has {base.count}")
    m = math.ceil(alpha * base.count)
    order = np.lexsort((np.arange(base.count), -profile.counts))
    kept = np.sort(order[:m])
    return base.take(kept)
