"""Build-and-search demo: one synthetic dataset, a few pipeline settings,
recall/QPS/memory per setting printed as a table.

Usage: python3 scripts/run_pipeline_demo.py [--n 20000] [--dim 64] ...
"""

import argparse
import time

import numpy as np

from anntune.dataset import VectorSet, brute_force_knn, generate_synthetic
from anntune.metrics import measure_qps, memory_estimate, recall_at_k
from anntune.pipeline import PipelineConfig, build_pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--queries", type=int, default=500)
    ap.add_argument("--blobs", type=int, default=8)
    ap.add_argument("--anisotropy", type=float, default=0.9)
    ap.add_argument("--pool-size", type=int, default=100)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--d", type=int,
                    help="reduced dim for the PCA rows (default: 3*dim/8)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    d_red = args.d if args.d is not None else 3 * args.dim // 8

    data = generate_synthetic(args.n + args.queries, args.dim,
                              num_blobs=args.blobs,
                              anisotropy=args.anisotropy, seed=args.seed)
    base = VectorSet(data.values[:args.n])
    queries = VectorSet(data.values[args.n:])
    print(f"dataset: {args.n}x{args.dim}, {args.queries} queries, "
          f"{args.blobs} blobs, anisotropy {args.anisotropy}")

    t0 = time.perf_counter()
    truth = brute_force_knn(base, queries, 10)
    brute_qps = measure_qps(lambda q: brute_force_knn(base, q, 10), queries, 3)
    print(f"brute force: {brute_qps:8.0f} qps "
          f"(ground truth in {time.perf_counter() - t0:.1f}s)\n")

    config = PipelineConfig(k=10, pool_size=args.pool_size,
                            repeats=args.repeats, seed=args.seed)
    settings = [
        ("vanilla graph", dict(d=None, alpha=1.0, num_clusters=1)),
        ("+ entry clusters", dict(d=None, alpha=1.0, num_clusters=16)),
        (f"+ PCA d={d_red}", dict(d=d_red, alpha=1.0, num_clusters=16)),
        ("+ subsample 0.8", dict(d=d_red, alpha=0.8, num_clusters=16)),
    ]
    print(f"{'setting':<18} {'build(s)':>8} {'recall@10':>9} {'qps':>9} "
          f"{'x brute':>8} {'mem(MB)':>8}")
    for name, kwargs in settings:
        t0 = time.perf_counter()
        pipe = build_pipeline(base, config=config, **kwargs)
        build_s = time.perf_counter() - t0
        recall = recall_at_k(truth, pipe.search_batch(queries), 10)
        qps = measure_qps(pipe.batch_searcher(), queries, args.repeats)
        mem = memory_estimate(pipe.index, pipe.pca, pipe.selector)
        print(f"{name:<18} {build_s:8.1f} {recall:9.4f} {qps:9.0f} "
              f"{qps / brute_qps:8.1f} {mem / 1e6:8.1f}")


if __name__ == "__main__":
    main()
