"""Tuning loop: history handling, Pareto logic, suggestion policy, resume."""

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import anntune.tuner as tuner
from anntune.dataset import VectorSet, brute_force_knn, generate_synthetic
from anntune.metrics import recall_at_k
from anntune.pipeline import PipelineConfig, build_pipeline
from anntune.tuner import (TpeState, TrialParams, TrialRecord, TunerConfig,
                           append_record, default_search_space, evaluate_trial,
                           load_history, make_evaluator, optimize_constrained,
                           optimize_multi, pareto_front, tpe_suggest)

from conftest import make_gaussian


def _rec(recall, qps, idx, d=32, alpha=1.0, nc=1, error=None, feasible=None):
    if feasible is None:
        feasible = error is None and recall >= 0.9
    return TrialRecord(params=TrialParams(d=d, alpha=alpha, num_clusters=nc),
                       recall=recall, qps=qps, memory_bytes=0, feasible=feasible,
                       build_seconds=0.0, trial_index=idx, error=error)


def _mock_evaluator(fn):
    def evaluator(params):
        recall, qps = fn(params)
        return TrialRecord(params=params, recall=recall, qps=qps, memory_bytes=0,
                           feasible=False, build_seconds=0.0, trial_index=-1)
    return evaluator


def test_params_and_record_dict_round_trip():
    p = TrialParams(d=17, alpha=0.625, num_clusters=9)
    assert TrialParams.from_dict(json.loads(json.dumps(p.to_dict()))) == p
    assert TrialParams.from_vector(p.to_vector()) == p
    r = _rec(0.93, 1234.5, 4, d=17, alpha=0.625, nc=9)
    assert TrialRecord.from_dict(json.loads(json.dumps(r.to_dict()))) == r
    bad = _rec(0.0, 0.0, 2, error="build: boom")
    assert TrialRecord.from_dict(bad.to_dict()) == bad


def test_default_search_space_bounds():
    space = default_search_space(128)
    assert space.names == ("d", "alpha", "num_clusters")
    d, alpha, nc = space.params
    assert (d.low, d.high, d.integer) == (16, 128, True)
    assert (alpha.low, alpha.high) == (0.5, 1.0)
    assert (nc.low, nc.high, nc.integer) == (1, 64, True)
    assert default_search_space(4).params[0].low == 1
    assert default_search_space(128, d_min=32, alpha_min=0.7,
                                clusters_max=8).params[2].high == 8


def test_pareto_front_trivial_cases():
    assert pareto_front([]) == []
    solo = _rec(0.9, 10.0, 0)
    assert pareto_front([solo]) == [solo]
    a = _rec(0.9, 10.0, 0)
    b = _rec(0.8, 5.0, 1)  # dominated in both
    assert pareto_front([a, b]) == [a]
    c = _rec(0.95, 5.0, 2)  # trade-off with a
    assert pareto_front([a, b, c]) == [a, c]


def test_pareto_front_duplicates_keep_lowest_index():
    a = _rec(0.9, 10.0, 5)
    b = _rec(0.9, 10.0, 2)
    front = pareto_front([a, b])
    assert len(front) == 1 and front[0].trial_index == 2


def _oracle_front(records):
    def dominates(s, r):
        return (s.recall >= r.recall and s.qps >= r.qps
                and (s.recall > r.recall or s.qps > r.qps))
    keep = []
    for r in records:
        if any(dominates(s, r) for s in records):
            continue
        if any(s.recall == r.recall and s.qps == r.qps
               and s.trial_index < r.trial_index for s in records):
            continue
        keep.append(r)
    return sorted(keep, key=lambda r: r.recall)


def test_pareto_front_matches_exhaustive_oracle():
    rng = np.random.default_rng(0)
    records = [_rec(float(rng.integers(0, 5)) / 4, float(rng.integers(0, 5)), i)
               for i in range(1000)]
    assert pareto_front(records) == _oracle_front(records)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), max_size=40))
def test_pareto_front_properties(pairs):
    records = [_rec(r / 6, float(q), i) for i, (r, q) in enumerate(pairs)]
    front = pareto_front(records)
    assert front == _oracle_front(records)
    recalls = [r.recall for r in front]
    qpss = [r.qps for r in front]
    assert recalls == sorted(recalls)
    assert all(x > y for x, y in zip(qpss, qpss[1:]))


def test_constrained_split_prefers_feasible_by_qps():
    history = [
        _rec(0.95, 100.0, 0), _rec(0.92, 50.0, 1),
        _rec(0.91, 200.0, 2), _rec(0.99, 10.0, 3),
        _rec(0.50, 0.0, 4), _rec(0.85, 0.0, 5),
        _rec(0.20, 0.0, 6), _rec(0.70, 0.0, 7),
    ]
    good, bad = tuner._split_constrained(history, 0.25)
    assert [r.trial_index for r in good] == [2, 0]
    assert len(bad) == 6
    # with one feasible trial the best infeasible recall joins the good group
    history2 = [_rec(0.95, 100.0, 0), _rec(0.85, 0.0, 1),
                _rec(0.50, 0.0, 2), _rec(0.70, 0.0, 3)]
    good2, _ = tuner._split_constrained(history2, 0.5)
    assert [r.trial_index for r in good2] == [0, 1]


def test_multi_split_orders_by_domination_rank():
    a = _rec(0.9, 100.0, 0)
    b = _rec(0.8, 200.0, 1)
    c = _rec(0.7, 50.0, 2)  # dominated by b
    good, bad = tuner._split_multi([a, b, c], 0.5)
    assert [r.trial_index for r in good] == [0, 1]
    assert [r.trial_index for r in bad] == [2]


def test_suggest_startup_is_uniform_and_keyed_on_history_length():
    space = default_search_space(64)
    cfg = TunerConfig(seed=3, startup_trials=5)
    empty = tpe_suggest(TpeState(config=cfg), space)
    again = tpe_suggest(TpeState(config=cfg), space)
    assert empty == again
    one = tpe_suggest(TpeState(config=cfg, history=[_rec(1.0, 1.0, 0)]), space)
    assert one != empty  # a fresh stream per history length
    assert 8 <= empty.d <= 64 and 0.5 <= empty.alpha <= 1.0
    assert 1 <= empty.num_clusters <= 64


def test_suggest_after_startup_in_bounds_and_deterministic():
    space = default_search_space(64)
    cfg = TunerConfig(seed=1, startup_trials=4)
    rng = np.random.default_rng(9)
    history = [_rec(float(rng.random()), float(rng.random()), i,
                    d=int(rng.integers(8, 65)),
                    alpha=float(rng.uniform(0.5, 1.0)),
                    nc=int(rng.integers(1, 65)))
               for i in range(10)]
    state = TpeState(config=cfg, history=history)
    a = tpe_suggest(state, space)
    b = tpe_suggest(state, space)
    assert a == b
    assert 8 <= a.d <= 64 and 0.5 <= a.alpha <= 1.0 and 1 <= a.num_clusters <= 64


def test_suggest_rejects_misordered_space():
    space = tuner.tpe.SearchSpace(params=(
        tuner.tpe.ParamSpec("alpha", 0.5, 1.0),
        tuner.tpe.ParamSpec("d", 1, 8, integer=True),
        tuner.tpe.ParamSpec("num_clusters", 1, 4, integer=True),
    ))
    with pytest.raises(ValueError, match="search space must cover"):
        tpe_suggest(TpeState(config=TunerConfig()), space)


def test_optimize_budget_one_and_validation():
    space = default_search_space(32)
    ev = _mock_evaluator(lambda p: (1.0, float(p.d)))
    res = optimize_constrained(1, space, ev)
    assert len(res.history) == 1
    assert res.best == res.history[0]
    assert res.mode == "constrained"
    assert res.wall_seconds >= 0.0
    with pytest.raises(ValueError):
        optimize_constrained(0, space, ev)
    with pytest.raises(ValueError):
        optimize_constrained(1, space, ev, initial_history=res.history * 2)


def test_optimize_vacuous_constraint_takes_max_qps():
    space = default_search_space(32)
    cfg = TunerConfig(recall_threshold=0.0, startup_trials=5, seed=0)
    ev = _mock_evaluator(lambda p: (0.1, float(p.d)))
    res = optimize_constrained(12, space, ev, config=cfg)
    assert all(r.feasible for r in res.history)
    assert res.best.qps == max(r.qps for r in res.history)


def test_optimize_finds_feasible_qps_plateau():
    space = default_search_space(100)
    for seed in range(5):
        cfg = TunerConfig(seed=seed, startup_trials=10)
        ev = _mock_evaluator(
            lambda p: (1.0 if p.d >= 20 else 0.5, 1000.0 if p.d <= 40 else 100.0))
        res = optimize_constrained(30, space, ev, config=cfg)
        assert res.best.feasible
        assert res.best.qps == 1000.0
        assert 20 <= res.best.params.d <= 40


def test_optimize_survives_evaluator_exceptions():
    space = default_search_space(32)
    calls = []

    def flaky(params):
        calls.append(params)
        if len(calls) % 3 == 0:
            raise RuntimeError("transient failure")
        return _mock_evaluator(lambda p: (1.0, float(p.d)))(params)

    res = optimize_constrained(9, space, flaky, config=TunerConfig(seed=2))
    assert len(res.history) == 9
    failed = [r for r in res.history if r.error is not None]
    assert len(failed) == 3
    assert all(r.error.startswith("evaluator:") for r in failed)
    assert all(not r.feasible for r in failed)
    assert [r.trial_index for r in res.history] == list(range(9))
    assert res.best.error is None


def test_optimize_multi_reports_trade_off_front():
    space = default_search_space(100)
    ev = _mock_evaluator(lambda p: (p.d / 100.0, 101.0 - p.d))
    res = optimize_multi(25, space, ev, config=TunerConfig(seed=4))
    assert res.mode == "multi"
    unique_d = {r.params.d for r in res.history}
    assert len(res.pareto) == len(unique_d)
    recalls = [r.recall for r in res.pareto]
    assert recalls == sorted(recalls)


def test_optimize_is_deterministic():
    space = default_search_space(64)
    ev = _mock_evaluator(lambda p: (min(1.0, p.d / 50.0), p.alpha * 100.0))
    a = optimize_constrained(15, space, ev, config=TunerConfig(seed=5))
    b = optimize_constrained(15, space, ev, config=TunerConfig(seed=5))
    assert [r.params for r in a.history] == [r.params for r in b.history]
    assert a.best.params == b.best.params


def test_resume_matches_uninterrupted_run():
    space = default_search_space(64)
    ev = _mock_evaluator(lambda p: (min(1.0, p.d / 50.0), p.alpha * 100.0))
    cfg = TunerConfig(seed=6)
    full = optimize_constrained(20, space, ev, config=cfg)
    part = optimize_constrained(12, space, ev, config=cfg)
    seen = []
    resumed = optimize_constrained(20, space, ev, config=cfg,
                                   initial_history=part.history,
                                   on_record=seen.append)
    assert [r.params for r in resumed.history] == [r.params for r in full.history]
    assert [r.trial_index for r in seen] == list(range(12, 20))


def test_history_jsonl_round_trip(tmp_path):
    path = tmp_path / "history.jsonl"
    records = [_rec(0.9, 10.0, 0), _rec(0.5, 0.0, 1, error="build: nope"),
               _rec(0.99, 123.456, 2, d=7, alpha=0.55, nc=3)]
    for r in records:
        append_record(path, r)
    assert load_history(path) == records
    # appending keeps earlier lines untouched
    append_record(path, _rec(1.0, 1.0, 3))
    assert load_history(path)[:3] == records


def _tiny_problem():
    data = generate_synthetic(260, 8, num_blobs=3, anisotropy=0.8, seed=0)
    base = VectorSet(data.values[:220])
    queries = VectorSet(data.values[220:])
    config = PipelineConfig(k=5, k_hub=4, max_degree=6, build_pool=12,
                            pool_size=40, repeats=3, kmeans_iters=5)
    truth = brute_force_knn(base, queries, config.k)
    return base, queries, truth, config


def test_evaluate_trial_matches_direct_pipeline():
    base, queries, truth, config = _tiny_problem()
    params = TrialParams(d=8, alpha=1.0, num_clusters=2)
    rec = evaluate_trial(params, base, queries, truth, config)
    pipe = build_pipeline(base, d=8, alpha=1.0, num_clusters=2, config=config)
    expect = recall_at_k(truth, pipe.search_batch(queries), config.k)
    assert rec.error is None
    assert rec.recall == expect
    assert rec.qps > 0.0
    assert rec.memory_bytes > 0
    assert rec.build_seconds > 0.0
    assert rec.feasible == (rec.recall >= config.recall_threshold)


def test_evaluate_trial_failure_names_stage():
    base, queries, truth, config = _tiny_problem()
    degenerate = evaluate_trial(TrialParams(d=8, alpha=0.001, num_clusters=1),
                                base, queries, truth, config)
    assert degenerate.error is not None and degenerate.error.startswith("build:")
    assert degenerate.qps == 0.0 and not degenerate.feasible
    # k larger than the surviving subset fails at the search stage
    small = evaluate_trial(TrialParams(d=8, alpha=0.015, num_clusters=1),
                           base, queries, truth, config)
    assert small.error is not None and small.error.startswith("search:")


def test_make_evaluator_caches_hubness_profile(monkeypatch):
    base, queries, truth, config = _tiny_problem()
    calls = []
    real = tuner.k_occurrence

    def counting(vs, k_hub):
        calls.append(k_hub)
        return real(vs, k_hub)

    monkeypatch.setattr(tuner, "k_occurrence", counting)
    evaluator = make_evaluator(base, queries, truth, config)
    evaluator(TrialParams(d=8, alpha=1.0, num_clusters=1))
    assert calls == []  # no subsampling, no profile needed
    a = evaluator(TrialParams(d=8, alpha=0.8, num_clusters=1))
    b = evaluator(TrialParams(d=4, alpha=0.6, num_clusters=2))
    assert calls == [config.k_hub]  # computed once, reused
    assert a.error is None and b.error is None
    direct = evaluate_trial(TrialParams(d=8, alpha=0.8, num_clusters=1),
                            base, queries, truth, config)
    assert a.recall == direct.recall


def test_best_constrained_fallback_without_feasible():
    history = [_rec(0.5, 100.0, 0), _rec(0.8, 10.0, 1), _rec(0.8, 999.0, 2)]
    best = tuner._best_constrained(history)
    assert best.trial_index == 1  # highest recall, ties to earliest
    assert not best.feasible
