"""Tuning demo: optimize (d, alpha, entry clusters) on synthetic data in
constrained mode (max QPS subject to recall@10 >= 0.9), then rerun the
same budget in multi-objective mode and print the Pareto front.

Usage: python3 scripts/run_tuning.py [--budget 25] [--n 20000] ...
"""

import argparse
import time

from anntune.dataset import VectorSet, brute_force_knn, generate_synthetic
from anntune.pipeline import PipelineConfig
from anntune.tuner import (TunerConfig, default_search_space, make_evaluator,
                           optimize_constrained, optimize_multi)


def on_record(rec):
    flag = "feasible" if rec.feasible else "infeasible"
    status = flag if rec.error is None else f"failed ({rec.error})"
    print(f"  trial {rec.trial_index:2d}: d={rec.params.d:3d} "
          f"alpha={rec.params.alpha:.3f} k={rec.params.num_clusters:2d} "
          f"recall={rec.recall:.4f} qps={rec.qps:8.0f} {status}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--queries", type=int, default=500)
    ap.add_argument("--anisotropy", type=float, default=0.9)
    ap.add_argument("--budget", type=int, default=25)
    ap.add_argument("--recall-threshold", type=float, default=0.9)
    ap.add_argument("--pool-size", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    data = generate_synthetic(args.n + args.queries, args.dim, num_blobs=8,
                              anisotropy=args.anisotropy, seed=args.seed)
    base = VectorSet(data.values[:args.n])
    queries = VectorSet(data.values[args.n:])
    truth = brute_force_knn(base, queries, 10)

    config = PipelineConfig(k=10, pool_size=args.pool_size, repeats=5,
                            kmeans_iters=10, seed=args.seed,
                            recall_threshold=args.recall_threshold)
    space = default_search_space(args.dim)
    tuner_config = TunerConfig(seed=args.seed,
                               recall_threshold=args.recall_threshold)
    evaluator = make_evaluator(base, queries, truth, config)

    print(f"constrained: maximize qps s.t. recall@10 >= "
          f"{args.recall_threshold} ({args.budget} trials)")
    t0 = time.perf_counter()
    result = optimize_constrained(args.budget, space, evaluator, tuner_config,
                                  on_record=on_record)
    best = result.best
    print(f"best: d={best.params.d} alpha={best.params.alpha:.3f} "
          f"k={best.params.num_clusters} recall={best.recall:.4f} "
          f"qps={best.qps:.0f} feasible={best.feasible} "
          f"[{time.perf_counter() - t0:.0f}s]\n")

    print(f"multi-objective: maximize (recall@10, qps) ({args.budget} trials)")
    result = optimize_multi(args.budget, space, evaluator, tuner_config,
                            on_record=on_record)
    print("pareto front (recall ascending):")
    for rec in result.pareto:
        print(f"  d={rec.params.d:3d} alpha={rec.params.alpha:.3f} "
              f"k={rec.params.num_clusters:2d} recall={rec.recall:.4f} "
              f"qps={rec.qps:8.0f}")


if __name__ == "__main__":
    main()
