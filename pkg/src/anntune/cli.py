"""Command-line front end for the pipeline artifacts.

Subcommands cover the full workflow: ``generate`` (synthetic database +
queries + ground truth), ``subsample`` (antihub filtering to fvecs),
``build`` (single-file index with all pipeline sections), ``search``
(batch query results as JSON), ``bench`` (recall/QPS/memory report JSON
plus CSV rows for recall-vs-QPS plots), ``tune`` (black-box optimization
with an append-only JSONL history, resumable), and ``report`` (re-derive
best/Pareto from a history file, or re-read bench CSV rows).

Every value flag can instead come from a JSON config file (``--config``);
explicit flags win over config keys of the same name.  Recognized keys:
paths ``database``, ``queries``, ``groundtruth``, ``index``, ``history``,
``report``, ``csv``, ``report_dir``; pipeline params ``d``, ``alpha``,
``entry_clusters``, ``max_degree``, ``build_pool``, ``pool_size``,
``k_hub``, ``k``, ``repeats``, ``kmeans_iters``, ``seed``; tuning params
``budget``, ``mode``, ``recall_threshold``, ``d_min``, ``d_max``,
``alpha_min``, ``clusters_max``; generation params ``n``, ``dim``,
``queries_n``, ``blobs``, ``anisotropy``.

Commands are deterministic given ``--seed`` and identical inputs (timing
fields excepted); exit code is 0 iff the command completed, otherwise a
single ``error: ...`` line goes to stderr and the exit code is 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .antihub import antihub_subsample, k_occurrence
from .dataset import (NeighborList, VectorSet, brute_force_knn,
                      generate_synthetic, load_fvecs, save_fvecs)
from .entrypoint import kmeans_fit
from .graph import DEFAULT_BUILD_POOL, DEFAULT_MAX_DEGREE
from .metrics import BenchReport, measure_qps, memory_estimate, recall_at_k
from .pipeline import Pipeline, PipelineConfig, build_pipeline
from .storage import load_index, save_index
from . import tpe, tuner

__all__ = ["main"]


# ---------------------------------------------------------------------------
# config / flag resolution

class _Options:
    """Flag-over-config-over-default resolution for one parsed command."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config: dict = {}
        if getattr(args, "config", None):
            with open(args.config) as fh:
                self.config = json.load(fh)
            if not isinstance(self.config, dict):
                raise ValueError(f"{args.config}: config must be a JSON object")

    def get(self, key: str, default=None):
        value = getattr(self.args, key, None)
        if value is None:
            value = self.config.get(key, default)
        return value

    def require(self, key: str):
        value = self.get(key)
        if value is None:
            flag = "--" + key.replace("_", "-")
            raise ValueError(f"missing required {flag} (or config key '{key}')")
        return value

    def out_path(self, key: str, default_name: str) -> str:
        """Output path: explicit flag/config key, else inside report_dir."""
        value = self.get(key)
        if value is not None:
            return value
        return os.path.join(self.get("report_dir", "."), default_name)


def _write_json(path: str, obj) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _load_ground_truth(path: str) -> tuple[int, list[NeighborList]]:
    with open(path) as fh:
        obj = json.load(fh)
    truth = [NeighborList(np.asarray(i, dtype=np.int64),
                          np.asarray(d, dtype=np.float64))
             for i, d in zip(obj["ids"], obj["distances"])]
    return int(obj["k"]), truth


def _pipeline_from_index(path: str, config: PipelineConfig) -> tuple[Pipeline, dict]:
    loaded = load_index(path)
    selector = loaded.selector
    if selector is None:
        # Index saved without entry points: fall back to a single centroid,
        # which lands on the nearest-to-mean navigating node.
        selector = kmeans_fit(loaded.index.base, 1, max_iters=1, seed=0)
    pipe = Pipeline(index=loaded.index, pca=loaded.pca, selector=selector,
                    config=config)
    return pipe, loaded.meta


def _neighbor_payload(results: list[NeighborList]) -> dict:
    return {"ids": [r.ids.tolist() for r in results],
            "distances": [r.distances.tolist() for r in results]}


# ---------------------------------------------------------------------------
# subcommands

def cmd_generate(opts: _Options) -> int:
    n = int(opts.require("n"))
    dim = int(opts.require("dim"))
    queries_n = int(opts.get("queries_n", 100))
    k = int(opts.get("k", 10))
    blobs = int(opts.get("blobs", 8))
    anisotropy = float(opts.get("anisotropy", 1.0))
    seed = int(opts.get("seed", 0))
    out_dir = opts.get("out_dir", ".")

    # One draw for database and queries together so queries follow the same
    # mixture instead of landing in fresh blobs.
    data = generate_synthetic(n + queries_n, dim, num_blobs=blobs,
                              anisotropy=anisotropy, seed=seed)
    database = VectorSet(data.values[:n])
    queries = VectorSet(data.values[n:])
    truth = brute_force_knn(database, queries, k)

    os.makedirs(out_dir, exist_ok=True)
    db_path = os.path.join(out_dir, "database.fvecs")
    q_path = os.path.join(out_dir, "queries.fvecs")
    gt_path = os.path.join(out_dir, "groundtruth.json")
    save_fvecs(database, db_path)
    save_fvecs(queries, q_path)
    _write_json(gt_path, {"k": k, **_neighbor_payload(truth)})
    print(f"wrote {db_path} ({n}x{dim}), {q_path} ({queries_n}x{dim}), "
          f"{gt_path} (k={k})")
    return 0


def cmd_subsample(opts: _Options) -> int:
    base = load_fvecs(opts.require("database"))
    alpha = float(opts.require("alpha"))
    k_hub = int(opts.get("k_hub", 10))
    out = opts.require("out")

    profile = k_occurrence(base, k_hub)
    kept = antihub_subsample(base, profile, alpha)
    save_fvecs(kept, out)
    ids_out = opts.get("ids_out")
    if ids_out is not None:
        _write_json(ids_out, {"ids": kept.ids.tolist()})
    print(f"kept {kept.count}/{base.count} rows (alpha={alpha}, "
          f"k_hub={k_hub}) -> {out}")
    return 0


def cmd_build(opts: _Options) -> int:
    stage = "load"
    try:
        db_path = opts.require("database")
        index_path = opts.require("index")
        base = load_fvecs(db_path)
        d = opts.get("d")
        d = base.dim if d is None else int(d)
        alpha = float(opts.get("alpha", 1.0))
        entry_clusters = int(opts.get("entry_clusters", 1))
        config = PipelineConfig(
            k_hub=int(opts.get("k_hub", 10)),
            max_degree=int(opts.get("max_degree", DEFAULT_MAX_DEGREE)),
            build_pool=int(opts.get("build_pool", DEFAULT_BUILD_POOL)),
            kmeans_iters=int(opts.get("kmeans_iters", 25)),
            seed=int(opts.get("seed", 0)),
        )
        stage = "build"
        pipe = build_pipeline(base, d=d, alpha=alpha,
                              num_clusters=entry_clusters, config=config)
        stage = "save"
        meta = {
            "source_count": base.count,
            "source_dim": base.dim,
            "d": d,
            "alpha": alpha,
            "entry_clusters": entry_clusters,
            "max_degree": config.max_degree,
            "build_pool": config.build_pool,
            "k_hub": config.k_hub,
            "kmeans_iters": config.kmeans_iters,
            "seed": config.seed,
        }
        save_index(index_path, pipe.index, pipe.pca, pipe.selector, meta)
    except Exception as exc:
        raise RuntimeError(f"{stage}: {exc}") from exc
    print(f"built index {index_path}: {pipe.index.base.count} nodes, "
          f"dim {pipe.index.base.dim}, entries {entry_clusters}")
    return 0


def cmd_search(opts: _Options) -> int:
    k = int(opts.get("k", 10))
    pool_size = int(opts.get("pool_size", 100))
    config = PipelineConfig(k=k, pool_size=pool_size)
    pipe, _ = _pipeline_from_index(opts.require("index"), config)
    queries = load_fvecs(opts.require("queries"))
    results = pipe.search_batch(queries)
    out = opts.out_path("out", "results.json")
    _write_json(out, {"k": k, "pool_size": pool_size,
                      **_neighbor_payload(results)})
    print(f"searched {queries.count} queries (k={k}, pool_size={pool_size}) "
          f"-> {out}")
    return 0


def cmd_bench(opts: _Options) -> int:
    k = int(opts.get("k", 10))
    repeats = int(opts.get("repeats", 10))
    pool_size = int(opts.get("pool_size", 100))
    sweep = opts.get("pool_sizes")
    if sweep is None:
        pool_sizes = [pool_size]
    else:
        pool_sizes = [int(tok) for tok in str(sweep).split(",") if tok.strip()]
        if not pool_sizes:
            raise ValueError(f"--pool-sizes: no pool sizes in {sweep!r}")

    config = PipelineConfig(k=k, pool_size=pool_sizes[0], repeats=repeats)
    pipe, meta = _pipeline_from_index(opts.require("index"), config)
    queries = load_fvecs(opts.require("queries"))
    gt_k, truth = _load_ground_truth(opts.require("groundtruth"))
    if gt_k < k:
        raise ValueError(f"ground truth has k={gt_k}, need at least {k}")
    memory = memory_estimate(pipe.index, pipe.pca, pipe.selector)

    rows = []
    for p in pool_sizes:
        searcher = pipe.batch_searcher(k=k, pool_size=p)
        recall = recall_at_k(truth, searcher(queries), k)
        qps = measure_qps(searcher, queries, repeats)
        rows.append((p, BenchReport(recall_at_k=recall, qps=qps,
                                    memory_bytes=memory, repeats=repeats, k=k)))
        print(f"pool_size={p}: recall@{k}={recall:.4f} qps={qps:.1f} "
              f"memory={memory}")

    report_path = opts.out_path("report", "bench_report.json")
    _write_json(report_path, rows[0][1].to_dict())
    csv_path = opts.get("csv")
    if csv_path is not None:
        os.makedirs(os.path.dirname(os.path.abspath(csv_path)), exist_ok=True)
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pool_size", "k", "recall_at_k", "qps",
                             "memory_bytes", "repeats"])
            for p, rep in rows:
                writer.writerow([p, rep.k, repr(rep.recall_at_k),
                                 repr(rep.qps), rep.memory_bytes, rep.repeats])
        print(f"wrote {csv_path} ({len(rows)} rows)")
    print(f"wrote {report_path}")
    return 0


def cmd_tune(opts: _Options) -> int:
    base = load_fvecs(opts.require("database"))
    queries = load_fvecs(opts.require("queries"))
    gt_k, truth = _load_ground_truth(opts.require("groundtruth"))
    k = int(opts.get("k", 10))
    if gt_k < k:
        raise ValueError(f"ground truth has k={gt_k}, need at least {k}")
    budget = int(opts.get("budget", 30))
    mode = str(opts.get("mode", "constrained"))
    if mode not in ("constrained", "multi"):
        raise ValueError(f"mode must be 'constrained' or 'multi', got {mode!r}")
    seed = int(opts.get("seed", 0))
    recall_threshold = float(opts.get("recall_threshold", 0.9))

    config = PipelineConfig(
        k=k,
        k_hub=int(opts.get("k_hub", 10)),
        max_degree=int(opts.get("max_degree", DEFAULT_MAX_DEGREE)),
        build_pool=int(opts.get("build_pool", DEFAULT_BUILD_POOL)),
        pool_size=int(opts.get("pool_size", 100)),
        repeats=int(opts.get("repeats", 10)),
        kmeans_iters=int(opts.get("kmeans_iters", 25)),
        seed=seed,
        recall_threshold=recall_threshold,
    )
    d_max = int(opts.get("d_max", base.dim))
    d_min = int(opts.get("d_min", max(1, d_max // 8)))
    space = tpe.SearchSpace(params=(
        tpe.ParamSpec("d", d_min, d_max, integer=True),
        tpe.ParamSpec("alpha", float(opts.get("alpha_min", 0.5)), 1.0),
        tpe.ParamSpec("num_clusters", 1, int(opts.get("clusters_max", 64)),
                      integer=True),
    ))
    tuner_config = tuner.TunerConfig(seed=seed,
                                     recall_threshold=recall_threshold)

    history_path = opts.out_path("history", "history.jsonl")
    initial = (tuner.load_history(history_path)
               if os.path.exists(history_path) else [])
    if initial:
        print(f"resuming from {history_path}: {len(initial)} trials done")

    def on_record(record: tuner.TrialRecord) -> None:
        tuner.append_record(history_path, record)
        status = "ok" if record.error is None else f"failed ({record.error})"
        print(f"trial {record.trial_index}: d={record.params.d} "
              f"alpha={record.params.alpha:.3f} "
              f"clusters={record.params.num_clusters} "
              f"recall={record.recall:.4f} qps={record.qps:.1f} {status}")

    evaluator = tuner.make_evaluator(base, queries, truth, config)
    optimize = (tuner.optimize_multi if mode == "multi"
                else tuner.optimize_constrained)
    result = optimize(budget, space, evaluator, tuner_config,
                      initial_history=initial, on_record=on_record)

    report_path = opts.out_path("report", "tune_report.json")
    _write_json(report_path, {
        "mode": mode,
        "trials": len(result.history),
        "seed": seed,
        "pool_size": config.pool_size,
        "recall_threshold": recall_threshold,
        "wall_seconds": result.wall_seconds,
        "best": result.best.to_dict(),
        "pareto": [r.to_dict() for r in result.pareto],
    })
    print(f"best: {result.best.params.to_dict()} "
          f"recall={result.best.recall:.4f} qps={result.best.qps:.1f} "
          f"feasible={result.best.feasible}")
    print(f"wrote {history_path} ({len(result.history)} trials), {report_path}")
    return 0


def cmd_report(opts: _Options) -> int:
    history_path = opts.get("history")
    csv_path = opts.get("csv")
    if history_path is None and csv_path is None:
        raise ValueError("need --history and/or --csv to report on")
    payload: dict = {}
    if history_path is not None:
        history = tuner.load_history(history_path)
        if not history:
            raise ValueError(f"{history_path}: empty history")
        successful = [r for r in history if r.error is None]
        best = tuner._best_constrained(history)
        front = tuner.pareto_front(successful if successful else history)
        payload.update({
            "trials": len(history),
            "failed_trials": len(history) - len(successful),
            "best": best.to_dict(),
            "pareto": [r.to_dict() for r in front],
        })
    if csv_path is not None:
        with open(csv_path, newline="") as fh:
            rows = [{
                "pool_size": int(row["pool_size"]),
                "k": int(row["k"]),
                "recall_at_k": float(row["recall_at_k"]),
                "qps": float(row["qps"]),
                "memory_bytes": int(row["memory_bytes"]),
                "repeats": int(row["repeats"]),
            } for row in csv.DictReader(fh)]
        payload["bench_rows"] = rows
    out = opts.get("out")
    if out is not None:
        _write_json(out, payload)
        print(f"wrote {out}")
    else:
        json.dump(payload, sys.stdout, indent=2)
        print()
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file; explicit flags win")
    sub.add_argument("--threads", type=int,
                     help="cap compiled-kernel worker threads")
    sub.add_argument("--seed", type=int, help="RNG seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anntune",
        description="Graph ANN index with antihub subsampling, PCA, k-means "
                    "entry points, and black-box parameter tuning.")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("generate", help="synthetic database, queries, "
                                             "and ground truth")
    p.add_argument("--n", type=int, help="database size")
    p.add_argument("--dim", type=int, help="vector dimension")
    p.add_argument("--queries", dest="queries_n", type=int,
                   help="number of queries (default 100)")
    p.add_argument("--k", type=int, help="ground-truth neighbors (default 10)")
    p.add_argument("--blobs", type=int, help="mixture components (default 8)")
    p.add_argument("--anisotropy", type=float,
                   help="per-axis geometric scale decay (default 1.0)")
    p.add_argument("--out-dir", help="output directory (default .)")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = commands.add_parser("subsample", help="antihub-filter a database")
    p.add_argument("--database", help="input fvecs")
    p.add_argument("--alpha", type=float, help="keep ratio in (0, 1]")
    p.add_argument("--k-hub", type=int,
                   help="k for the occurrence counts (default 10)")
    p.add_argument("--out", help="output fvecs")
    p.add_argument("--ids-out", help="optional JSON of kept row ids")
    _add_common(p)
    p.set_defaults(func=cmd_subsample)

    p = commands.add_parser("build", help="build and save an index")
    p.add_argument("--database", help="input fvecs")
    p.add_argument("--index", help="output index file")
    p.add_argument("--d", type=int, help="PCA target dim (default: no PCA)")
    p.add_argument("--alpha", type=float, help="antihub keep ratio (default 1)")
    p.add_argument("--entry-clusters", type=int,
                   help="k-means entry points (default 1)")
    p.add_argument("--max-degree", type=int, help="graph degree bound")
    p.add_argument("--build-pool", type=int, help="construction kNN length")
    p.add_argument("--k-hub", type=int, help="occurrence k (default 10)")
    p.add_argument("--kmeans-iters", type=int, help="Lloyd iterations")
    _add_common(p)
    p.set_defaults(func=cmd_build)

    p = commands.add_parser("search", help="run queries against an index")
    p.add_argument("--index", help="index file")
    p.add_argument("--queries", help="queries fvecs")
    p.add_argument("--k", type=int, help="neighbors per query (default 10)")
    p.add_argument("--pool-size", type=int, help="candidate pool (default 100)")
    p.add_argument("--out", help="results JSON (default results.json)")
    _add_common(p)
    p.set_defaults(func=cmd_search)

    p = commands.add_parser("bench", help="measure recall, QPS, and memory")
    p.add_argument("--index", help="index file")
    p.add_argument("--queries", help="queries fvecs")
    p.add_argument("--groundtruth", help="ground-truth JSON")
    p.add_argument("--k", type=int, help="recall cutoff (default 10)")
    p.add_argument("--pool-size", type=int, help="candidate pool (default 100)")
    p.add_argument("--pool-sizes",
                   help="comma-separated sweep for the CSV (overrides "
                        "--pool-size; report JSON covers the first)")
    p.add_argument("--repeats", type=int, help="timed repeats (default 10)")
    p.add_argument("--report", help="report JSON path")
    p.add_argument("--csv", help="optional CSV of per-pool-size rows")
    p.add_argument("--report-dir", help="directory for default output names")
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = commands.add_parser("tune", help="optimize (d, alpha, entry_clusters)")
    p.add_argument("--database", help="database fvecs")
    p.add_argument("--queries", help="queries fvecs")
    p.add_argument("--groundtruth", help="ground-truth JSON")
    p.add_argument("--budget", type=int, help="total trials incl. resumed "
                                              "(default 30)")
    p.add_argument("--mode", choices=("constrained", "multi"),
                   help="constrained: max QPS s.t. recall threshold; "
                        "multi: Pareto front (default constrained)")
    p.add_argument("--k", type=int, help="recall cutoff (default 10)")
    p.add_argument("--pool-size", type=int,
                   help="fixed search pool per trial (default 100)")
    p.add_argument("--repeats", type=int, help="QPS repeats per trial")
    p.add_argument("--recall-threshold", type=float,
                   help="feasibility bound (default 0.9)")
    p.add_argument("--k-hub", type=int, help="occurrence k (default 10)")
    p.add_argument("--max-degree", type=int, help="graph degree bound")
    p.add_argument("--build-pool", type=int, help="construction kNN length")
    p.add_argument("--kmeans-iters", type=int, help="Lloyd iterations")
    p.add_argument("--d-min", type=int, help="lower PCA-dim bound")
    p.add_argument("--d-max", type=int, help="upper PCA-dim bound")
    p.add_argument("--alpha-min", type=float, help="lower keep-ratio bound")
    p.add_argument("--clusters-max", type=int, help="upper entry-point bound")
    p.add_argument("--history", help="JSONL trial history (resumed if present)")
    p.add_argument("--report", help="report JSON path")
    p.add_argument("--report-dir", help="directory for default output names")
    _add_common(p)
    p.set_defaults(func=cmd_tune)

    p = commands.add_parser("report", help="summarize a history or bench CSV")
    p.add_argument("--history", help="JSONL trial history")
    p.add_argument("--csv", help="bench CSV to re-read")
    p.add_argument("--out", help="output JSON (default: stdout)")
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        opts = _Options(args)
        threads = opts.get("threads")
        if threads is not None:
            import numba
            numba.set_num_threads(max(1, int(threads)))
        return args.func(opts)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
