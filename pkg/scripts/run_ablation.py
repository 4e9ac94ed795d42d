"""Parameter ablation sweep: recall/QPS as a function of PCA dim, keep
ratio, and entry-cluster count, holding everything else fixed.

Each row varies one knob against the full-dim single-entry baseline, so
the printed table shows which reductions pay for themselves on data with
low intrinsic dimension.

Usage: python3 scripts/run_ablation.py [--csv out.csv] ...
"""

import argparse
import csv
import sys

from anntune.dataset import VectorSet, brute_force_knn, generate_synthetic
from anntune.metrics import measure_qps, memory_estimate, recall_at_k
from anntune.pipeline import PipelineConfig, build_pipeline


def run_setting(base, queries, truth, config, d, alpha, clusters, repeats):
    pipe = build_pipeline(base, d=d, alpha=alpha, num_clusters=clusters,
                          config=config)
    recall = recall_at_k(truth, pipe.search_batch(queries), 10)
    qps = measure_qps(pipe.batch_searcher(), queries, repeats)
    mem = memory_estimate(pipe.index, pipe.pca, pipe.selector)
    return recall, qps, mem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--queries", type=int, default=500)
    ap.add_argument("--anisotropy", type=float, default=0.9)
    ap.add_argument("--d-values", default="8,16,24,32,48")
    ap.add_argument("--alpha-values", default="0.5,0.7,0.9,1.0")
    ap.add_argument("--cluster-values", default="1,4,16,64")
    ap.add_argument("--pool-size", type=int, default=100)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", help="also write rows to this CSV file")
    args = ap.parse_args()

    data = generate_synthetic(args.n + args.queries, args.dim, num_blobs=8,
                              anisotropy=args.anisotropy, seed=args.seed)
    base = VectorSet(data.values[:args.n])
    queries = VectorSet(data.values[args.n:])
    truth = brute_force_knn(base, queries, 10)
    config = PipelineConfig(k=10, pool_size=args.pool_size,
                            repeats=args.repeats, seed=args.seed)

    rows = []

    def sweep(knob, values, make_params):
        for v in values:
            d, alpha, clusters = make_params(v)
            recall, qps, mem = run_setting(base, queries, truth, config,
                                           d, alpha, clusters, args.repeats)
            rows.append({"knob": knob, "value": v, "d": d or args.dim,
                         "alpha": alpha, "clusters": clusters,
                         "recall_at_10": recall, "qps": qps,
                         "memory_bytes": mem})
            print(f"{knob:>10}={v:<6} recall@10={recall:.4f} qps={qps:8.0f} "
                  f"mem={mem / 1e6:6.1f}MB")

    print(f"baseline: d={args.dim} alpha=1 clusters=1")
    sweep("baseline", [args.dim], lambda v: (None, 1.0, 1))
    sweep("d", [int(t) for t in args.d_values.split(",")],
          lambda v: (v, 1.0, 1))
    sweep("alpha", [float(t) for t in args.alpha_values.split(",")],
          lambda v: (None, v, 1))
    sweep("clusters", [int(t) for t in args.cluster_values.split(",")],
          lambda v: (None, 1.0, v))

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {args.csv} ({len(rows)} rows)", file=sys.stderr)


if __name__ == "__main__":
    main()
