"""End-to-end pipeline assembly: subsample → reduce → index → entry points.

``build_pipeline`` wires the stages for one parameter setting (PCA target
``d``, keep-ratio ``alpha``, ``num_clusters`` entry points) over a fixed
database.  The resulting ``Pipeline`` searches with original database ids,
and its ``batch_searcher`` closure is the timed unit for QPS measurement:
query-side PCA transform, entry selection, and graph search all happen
inside the call.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .antihub import HubnessProfile, antihub_subsample, k_occurrence
from .dataset import NeighborList, VectorSet
from .entrypoint import EntryPointSelector, batch_search_grouped, kmeans_fit
from .graph import (DEFAULT_BUILD_POOL, DEFAULT_MAX_DEGREE,
                    EXACT_KNN_THRESHOLD, GraphIndex, SearchParams, build_index)
from .pca import PcaModel, pca_fit, pca_transform

__all__ = ["Pipeline", "PipelineConfig", "build_pipeline"]


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
    """Fixed (non-tuned) pipeline parameters.

    ``pool_size`` is deliberately not part of the tuned search space; it is
    the search-time quality knob held constant per tuning run.
    ``pca_first`` flips the default subsample-then-PCA stage order.
    """

    k: int = 10
    k_hub: int = 10
    max_degree: int = DEFAULT_MAX_DEGREE
    build_pool: int = DEFAULT_BUILD_POOL
    pool_size: int = 100
    repeats: int = 10
    kmeans_iters: int = 25
    seed: int = 0
    exact_threshold: int = EXACT_KNN_THRESHOLD
    pca_first: bool = False
    recall_threshold: float = 0.9


@dataclasses.dataclass
class Pipeline:
    """A built index with its optional PCA model and entry-point selector."""

    index: GraphIndex
    pca: PcaModel | None
    selector: EntryPointSelector
    config: PipelineConfig

    def prepare_queries(self, queries: VectorSet) -> VectorSet:
        """Apply the query-side PCA transform (identity when no PCA)."""
        if self.pca is None:
            return queries
        return pca_transform(self.pca, queries)

    def search_batch(self, queries: VectorSet, k: int | None = None,
                     pool_size: int | None = None) -> list[NeighborList]:
        """Transform, select entries, search grouped; original-id results."""
        params = SearchParams(
            k=self.config.k if k is None else k,
            pool_size=self.config.pool_size if pool_size is None else pool_size)
        working = self.prepare_queries(queries)
        return batch_search_grouped(self.index, self.selector, working, params)

    def batch_searcher(self, k: int | None = None,
                       pool_size: int | None = None):
        """Closure suitable for ``measure_qps``: the timed path includes the
        query transform and entry selection."""
        return lambda queries: self.search_batch(queries, k=k, pool_size=pool_size)


def build_pipeline(base: VectorSet, d: int | None = None, alpha: float = 1.0,
                   num_clusters: int = 1,
                   config: PipelineConfig = PipelineConfig(),
                   profile: HubnessProfile | None = None) -> Pipeline:
    """Build the full pipeline for one (d, alpha, num_clusters) setting.

    Default stage order is subsample → PCA (profile computed on the original
    vectors; pass a cached ``profile`` to amortize it across settings).
    With ``config.pca_first`` the profile must be recomputed on the reduced
    vectors, so a cached profile is rejected.  ``alpha=1`` and
    ``d == base.dim`` (or ``d=None``) skip their stages entirely, making the
    no-reduction pipeline bit-identical to a plain index build.
    """
    if d is None:
        d = base.dim
    if not 1 <= d <= base.dim:
        raise ValueError(f"d must be in [1, {base.dim}], got {d}")
    if config.pca_first and profile is not None:
        raise ValueError("a cached hubness profile cannot be reused with "
                         "pca_first (it must be built on the reduced vectors)")

    def subsample(vs: VectorSet) -> VectorSet:
        if alpha >= 1.0:
            return vs
        prof = profile
        if prof is None or config.pca_first:
            prof = k_occurrence(vs, config.k_hub)
        return antihub_subsample(vs, prof, alpha)

    def reduce(vs: VectorSet) -> tuple[VectorSet, PcaModel | None]:
        if d == base.dim:
            return vs, None
        model = pca_fit(vs, d)
        return pca_transform(model, vs), model

    if config.pca_first:
        working, model = reduce(base)
        working = subsample(working)
    else:
        working = subsample(base)
        working, model = reduce(working)
    index = build_index(working, max_degree=config.max_degree,
                        build_pool=config.build_pool, seed=config.seed,
                        exact_threshold=config.exact_threshold)
    selector = kmeans_fit(working, num_clusters,
                          max_iters=config.kmeans_iters, seed=config.seed)
    return Pipeline(index=index, pca=model, selector=selector, config=config)
