"""anntune: an NSG-style graph ANN index with a recall/QPS pipeline tuner.

Builds a bounded-degree proximity graph over a float32 vector database,
searches it with best-first traversal from k-means-selected entry points,
and tunes the surrounding pipeline (PCA target dimension, hubness-based
subsampling ratio, number of entry clusters) with an in-repo TPE sampler —
either maximizing QPS under a Recall@10 constraint or mapping the full
recall/QPS Pareto front.
"""

__version__ = "0.1.0"

from .antihub import HubnessProfile, antihub_subsample, k_occurrence
from .dataset import (FvecsFormatError, NeighborList, VectorSet,
                      all_pairs_knn, brute_force_knn, generate_synthetic,
                      load_fvecs, save_fvecs)
from .entrypoint import (EntryPointSelector, batch_search_grouped,
                         batch_search_naive, kmeans_fit)
from .graph import GraphIndex, SearchParams, build_index
from .metrics import (BenchReport, measure_qps, memory_estimate, recall_at_k)
from .pca import PcaModel, pca_fit, pca_transform
from .pipeline import Pipeline, PipelineConfig, build_pipeline
from .storage import IndexFormatError, LoadedIndex, load_index, save_index
from .tuner import (TrialParams, TrialRecord, TunerConfig, TuningResult,
                    default_search_space, optimize_constrained, optimize_multi,
                    pareto_front)

__all__ = [
    "BenchReport", "EntryPointSelector", "FvecsFormatError", "GraphIndex",
    "HubnessProfile", "IndexFormatError", "LoadedIndex", "NeighborList",
    "PcaModel", "Pipeline", "PipelineConfig", "SearchParams", "TrialParams",
    "TrialRecord", "TunerConfig", "TuningResult", "VectorSet",
    "all_pairs_knn", "antihub_subsample", "batch_search_grouped",
    "batch_search_naive", "brute_force_knn", "build_index", "build_pipeline",
    "default_search_space", "generate_synthetic", "k_occurrence",
    "kmeans_fit", "load_fvecs", "load_index", "measure_qps",
    "memory_estimate", "optimize_constrained", "optimize_multi",
    "pareto_front", "pca_fit", "pca_transform", "recall_at_k", "save_fvecs",
    "save_index", "__version__",
]
