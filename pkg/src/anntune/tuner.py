"""Black-box tuning of (d, alpha, num_clusters) over a fixed database.

Two modes driven by the same TPE sampler: ``constrained`` maximizes QPS
subject to Recall@k >= recall_threshold (a soft constraint — infeasible
trials steer the model but are never returned as best while any feasible
trial exists), and ``multi`` treats (recall, QPS) as two maximized
objectives and reports the Pareto front.  Trial history is plain data,
append-only persistable as JSON lines for crash-resumable runs.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from typing import Callable, Iterable, Sequence

import numpy as np

from . import tpe
from .antihub import k_occurrence
from .dataset import NeighborList, VectorSet
from .metrics import measure_qps, memory_estimate, recall_at_k
from .pipeline import PipelineConfig, build_pipeline

__all__ = [
    "TpeState",
    "TrialParams",
    "TrialRecord",
    "TunerConfig",
    "TuningResult",
    "append_record",
    "default_search_space",
    "evaluate_trial",
    "load_history",
    "make_evaluator",
    "optimize_constrained",
    "optimize_multi",
    "pareto_front",
    "tpe_suggest",
]

# Canonical dimension order of the tuned space.
TRIAL_PARAM_ORDER = ("d", "alpha", "num_clusters")


@dataclasses.dataclass(frozen=True)
class TrialParams:
    """One point in the tuned space: PCA target dim, keep ratio, entry
    clusters."""

    d: int
    alpha: float
    num_clusters: int

    def to_vector(self) -> np.ndarray:
        return np.array([self.d, self.alpha, self.num_clusters], dtype=np.float64)

    @staticmethod
    def from_vector(vec: Sequence[float]) -> "TrialParams":
        return TrialParams(d=int(round(vec[0])), alpha=float(vec[1]),
                           num_clusters=int(round(vec[2])))

    def to_dict(self) -> dict:
        return {"d": self.d, "alpha": self.alpha, "num_clusters": self.num_clusters}

    @staticmethod
    def from_dict(obj: dict) -> "TrialParams":
        return TrialParams(d=int(obj["d"]), alpha=float(obj["alpha"]),
                           num_clusters=int(obj["num_clusters"]))


@dataclasses.dataclass(frozen=True)
class TrialRecord:
    """One evaluated trial.  Failed trials carry ``error`` and zeroed
    metrics; they stay in the history (the sampler treats them as bad)."""

    params: TrialParams
    recall: float
    qps: float
    memory_bytes: int
    feasible: bool
    build_seconds: float
    trial_index: int
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "trial_index": self.trial_index,
            "params": self.params.to_dict(),
            "recall": self.recall,
            "qps": self.qps,
            "memory_bytes": self.memory_bytes,
            "feasible": self.feasible,
            "build_seconds": self.build_seconds,
            "error": self.error,
        }

    @staticmethod
    def from_dict(obj: dict) -> "TrialRecord":
        return TrialRecord(
            params=TrialParams.from_dict(obj["params"]),
            recall=float(obj["recall"]),
            qps=float(obj["qps"]),
            memory_bytes=int(obj["memory_bytes"]),
            feasible=bool(obj["feasible"]),
            build_seconds=float(obj["build_seconds"]),
            trial_index=int(obj["trial_index"]),
            error=obj.get("error"),
        )


@dataclasses.dataclass(frozen=True)
class TunerConfig:
    """Sampler hyperparameters plus the recall constraint threshold."""

    gamma: float = 0.25
    startup_trials: int = 10
    n_candidates: int = 24
    bandwidth_floor: float = 0.01
    recall_threshold: float = 0.9
    seed: int = 0

    def tpe_config(self) -> tpe.TpeConfig:
        return tpe.TpeConfig(gamma=self.gamma, startup_trials=self.startup_trials,
                             n_candidates=self.n_candidates,
                             bandwidth_floor=self.bandwidth_floor)


@dataclasses.dataclass
class TpeState:
    """Everything the sampler needs: history, hyperparameters, mode."""

    config: TunerConfig
    history: list[TrialRecord] = dataclasses.field(default_factory=list)
    mode: str = "constrained"


@dataclasses.dataclass
class TuningResult:
    best: TrialRecord
    pareto: list[TrialRecord]
    history: list[TrialRecord]
    mode: str
    wall_seconds: float


def default_search_space(d0: int, d_min: int | None = None,
                         alpha_min: float = 0.5,
                         clusters_max: int = 64) -> tpe.SearchSpace:
    """d in [d0/8, d0], alpha in [alpha_min, 1], clusters in [1, clusters_max]."""
    if d_min is None:
        d_min = max(1, d0 // 8)
    return tpe.SearchSpace(params=(
        tpe.ParamSpec("d", d_min, d0, integer=True),
        tpe.ParamSpec("alpha", alpha_min, 1.0),
        tpe.ParamSpec("num_clusters", 1, clusters_max, integer=True),
    ))


def _dominates(a: TrialRecord, b: TrialRecord) -> bool:
    """a weakly better in both (recall, qps) and strictly better in one."""
    return (a.recall >= b.recall and a.qps >= b.qps
            and (a.recall > b.recall or a.qps > b.qps))


def pareto_front(records: Sequence[TrialRecord]) -> list[TrialRecord]:
    """Non-dominated records in (recall, qps), sorted by recall ascending;
    exact duplicates keep the lowest trial index."""
    order = sorted(records, key=lambda r: (-r.recall, -r.qps, r.trial_index))
    front: list[TrialRecord] = []
    best_qps = -math.inf
    for rec in order:
        if rec.qps > best_qps:
            front.append(rec)
            best_qps = rec.qps
        # equal qps: dominated via strictly larger recall earlier in the
        # order, or an exact duplicate of the already-kept record
    front.reverse()
    return front


def _split_constrained(history: Sequence[TrialRecord], gamma: float):
    """Feasible-first ordering: feasible by QPS descending, then infeasible
    by recall descending.  The good group is the leading gamma-quantile, so
    infeasible trials only enter it when feasible ones run out."""
    feasible = sorted((r for r in history if r.feasible),
                      key=lambda r: (-r.qps, r.trial_index))
    infeasible = sorted((r for r in history if not r.feasible),
                        key=lambda r: (-r.recall, r.trial_index))
    order = feasible + infeasible
    g = tpe.good_group_size(len(order), gamma)
    return order[:g], order[g:]


def _split_multi(history: Sequence[TrialRecord], gamma: float):
    """Order by non-domination rank (peeled Pareto fronts), then trial index."""
    remaining = list(history)
    rank: dict[int, int] = {}
    level = 0
    while remaining:
        front = [r for r in remaining
                 if not any(_dominates(s, r) for s in remaining)]
        for r in front:
            rank[id(r)] = level
        remaining = [r for r in remaining if id(r) not in rank]
        level += 1
    order = sorted(history, key=lambda r: (rank[id(r)], r.trial_index))
    g = tpe.good_group_size(len(order), gamma)
    return order[:g], order[g:]


def tpe_suggest(state: TpeState, space: tpe.SearchSpace) -> TrialParams:
    """Next point to try: uniform during startup, then the TPE ratio argmax.

    Deterministic given (seed, len(history)); the per-trial RNG stream is
    keyed on both so tuning runs are resumable without replaying draws.
    """
    if space.names != TRIAL_PARAM_ORDER:
        raise ValueError(f"search space must cover {TRIAL_PARAM_ORDER} in order, "
                         f"got {space.names}")
    n = len(state.history)
    rng = np.random.default_rng([state.config.seed, n])
    if n < state.config.startup_trials:
        vec = tpe.uniform_sample(space, rng)
    else:
        if state.mode == "multi":
            good, bad = _split_multi(state.history, state.config.gamma)
        else:
            good, bad = _split_constrained(state.history, state.config.gamma)
        gv = np.array([r.params.to_vector() for r in good])
        bv = (np.array([r.params.to_vector() for r in bad])
              if bad else np.zeros((0, len(space.params))))
        vec = tpe.suggest(space, gv, bv, state.config.tpe_config(), rng)
    return TrialParams.from_vector(space.clip(vec))


def evaluate_trial(params: TrialParams, dataset: VectorSet, queries: VectorSet,
                   ground_truth: Sequence[NeighborList], config: PipelineConfig,
                   profile=None) -> TrialRecord:
    """Build the pipeline for ``params`` and measure recall (against
    full-database ground truth), QPS, and memory.

    Any stage failure returns a failed record naming the stage instead of
    raising.  ``trial_index`` is filled by the optimizer loop.
    """
    t0 = time.perf_counter()
    stage = "build"
    try:
        pipe = build_pipeline(dataset, d=params.d, alpha=params.alpha,
                              num_clusters=params.num_clusters, config=config,
                              profile=profile)
        build_seconds = time.perf_counter() - t0
        stage = "search"
        searcher = pipe.batch_searcher()
        results = searcher(queries)
        recall = recall_at_k(ground_truth, results, config.k)
        stage = "bench"
        qps = measure_qps(searcher, queries, config.repeats)
        memory = memory_estimate(pipe.index, pipe.pca, pipe.selector)
        return TrialRecord(params=params, recall=recall, qps=qps,
                           memory_bytes=memory,
                           feasible=recall >= config.recall_threshold,
                           build_seconds=build_seconds, trial_index=-1)
    except Exception as exc:
        return TrialRecord(params=params, recall=0.0, qps=0.0, memory_bytes=0,
                           feasible=False,
                           build_seconds=time.perf_counter() - t0,
                           trial_index=-1, error=f"{stage}: {exc}")


def make_evaluator(dataset: VectorSet, queries: VectorSet,
                   ground_truth: Sequence[NeighborList],
                   config: PipelineConfig) -> Callable[[TrialParams], TrialRecord]:
    """Trial evaluator with a lazily cached hubness profile (the profile
    depends only on the database, not on the tuned parameters)."""
    cache: dict = {}

    def evaluator(params: TrialParams) -> TrialRecord:
        profile = None
        if params.alpha < 1.0 and not config.pca_first:
            if "profile" not in cache:
                cache["profile"] = k_occurrence(dataset, config.k_hub)
            profile = cache["profile"]
        return evaluate_trial(params, dataset, queries, ground_truth, config,
                              profile=profile)

    return evaluator


def _best_constrained(history: Sequence[TrialRecord]) -> TrialRecord:
    feasible = [r for r in history if r.feasible]
    if feasible:
        return max(feasible, key=lambda r: (r.qps, -r.trial_index))
    return max(history, key=lambda r: (r.recall, -r.trial_index))


def _optimize(budget: int, space: tpe.SearchSpace,
              evaluator: Callable[[TrialParams], TrialRecord],
              config: TunerConfig | None, mode: str,
              initial_history: Iterable[TrialRecord] | None,
              on_record: Callable[[TrialRecord], None] | None) -> TuningResult:
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    config = config or TunerConfig()
    history = list(initial_history or [])
    if len(history) > budget:
        raise ValueError(f"initial history ({len(history)} trials) exceeds "
                         f"budget {budget}")
    t0 = time.perf_counter()
    for i in range(len(history), budget):
        state = TpeState(config=config, history=history, mode=mode)
        params = tpe_suggest(state, space)
        try:
            rec = evaluator(params)
        except Exception as exc:
            rec = TrialRecord(params=params, recall=0.0, qps=0.0, memory_bytes=0,
                              feasible=False, build_seconds=0.0, trial_index=i,
                              error=f"evaluator: {exc}")
        rec = dataclasses.replace(
            rec, trial_index=i,
            feasible=rec.error is None and rec.recall >= config.recall_threshold)
        history.append(rec)
        if on_record is not None:
            on_record(rec)
    successful = [r for r in history if r.error is None]
    front = pareto_front(successful if successful else history)
    return TuningResult(best=_best_constrained(history), pareto=front,
                        history=history, mode=mode,
                        wall_seconds=time.perf_counter() - t0)


def optimize_constrained(budget: int, space: tpe.SearchSpace,
                         evaluator: Callable[[TrialParams], TrialRecord],
                         config: TunerConfig | None = None,
                         initial_history: Iterable[TrialRecord] | None = None,
                         on_record: Callable[[TrialRecord], None] | None = None,
                         ) -> TuningResult:
    """Maximize QPS subject to recall >= threshold.  ``best`` is the
    feasible record with the highest QPS; with no feasible record it is the
    highest-recall one (still flagged infeasible)."""
    return _optimize(budget, space, evaluator, config, "constrained",
                     initial_history, on_record)


def optimize_multi(budget: int, space: tpe.SearchSpace,
                   evaluator: Callable[[TrialParams], TrialRecord],
                   config: TunerConfig | None = None,
                   initial_history: Iterable[TrialRecord] | None = None,
                   on_record: Callable[[TrialRecord], None] | None = None,
                   ) -> TuningResult:
    """Maximize (recall, QPS) jointly; ``pareto`` holds the non-dominated
    records of the successful history."""
    return _optimize(budget, space, evaluator, config, "multi",
                     initial_history, on_record)


def append_record(path, record: TrialRecord) -> None:
    """Append one JSONL line (single write, so an interrupt cannot leave a
    torn line behind a flushed one)."""
    line = json.dumps(record.to_dict(), sort_keys=True) + "\n"
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line)


def load_history(path) -> list[TrialRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(TrialRecord.from_dict(json.loads(line)))
    return records
