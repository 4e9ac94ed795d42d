"""Recall@k, QPS measurement, and the analytic memory formula."""

import json
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anntune.dataset import NeighborList, VectorSet
from anntune.entrypoint import EntryPointSelector
from anntune.graph import GraphIndex
from anntune.metrics import (BenchReport, INDEX_HEADER_BYTES,
                             PCA_HEADER_BYTES, SELECTOR_HEADER_BYTES,
                             measure_qps, memory_estimate, recall_at_k)
from anntune.pca import PcaModel


def _lists(id_rows):
    return [NeighborList(np.array(ids, dtype=np.int64),
                         np.zeros(len(ids))) for ids in id_rows]


# ---------------------------------------------------------------------------
# recall_at_k

def test_recall_identity_is_one():
    truth = _lists([[1, 2, 3], [4, 5, 6]])
    assert recall_at_k(truth, truth, 3) == 1.0


def test_recall_disjoint_is_zero():
    truth = _lists([[1, 2], [3, 4]])
    got = _lists([[7, 8], [9, 10]])
    assert recall_at_k(truth, got, 2) == 0.0


def test_recall_nine_of_ten():
    truth = _lists([list(range(10))] * 4)
    got = _lists([list(range(9)) + [99]] * 4)
    assert recall_at_k(truth, got, 10) == 0.9


def test_recall_uses_first_k_only():
    truth = _lists([[1, 2, 3, 4]])
    got = _lists([[1, 9, 2, 3]])
    assert recall_at_k(truth, got, 2) == 0.5
    assert recall_at_k(truth, got, 4) == 0.75


def test_recall_errors():
    truth = _lists([[1, 2], [3, 4]])
    with pytest.raises(ValueError):
        recall_at_k(truth, _lists([[1, 2]]), 2)
    with pytest.raises(ValueError):
        recall_at_k(truth, truth, 3)
    with pytest.raises(ValueError):
        recall_at_k(truth, truth, 0)


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_recall_invariant_under_within_list_permutation(data):
    k = data.draw(st.integers(1, 6))
    rows = data.draw(st.integers(1, 5))
    rng = np.random.default_rng(data.draw(st.integers(0, 10_000)))
    truth = [rng.choice(50, size=k, replace=False) for _ in range(rows)]
    got = [rng.choice(50, size=k, replace=False) for _ in range(rows)]
    base = recall_at_k(_lists(truth), _lists(got), k)
    shuffled = [rng.permutation(row) for row in got]
    assert recall_at_k(_lists(truth), _lists(shuffled), k) == base
    assert 0.0 <= base <= 1.0


# ---------------------------------------------------------------------------
# measure_qps

def _spin(seconds: float) -> None:
    end = time.perf_counter() + seconds
    while time.perf_counter() < end:
        pass


def test_qps_formula_with_known_delay():
    queries = VectorSet(np.zeros((100, 2), dtype=np.float32))
    qps = measure_qps(lambda q: _spin(0.002), queries, repeats=10)
    expected = 100 / 0.002
    assert qps == pytest.approx(expected, rel=0.25)


def test_qps_halves_when_delay_doubles():
    queries = VectorSet(np.zeros((50, 2), dtype=np.float32))
    fast = measure_qps(lambda q: _spin(0.002), queries, repeats=5)
    slow = measure_qps(lambda q: _spin(0.004), queries, repeats=5)
    assert slow == pytest.approx(fast / 2, rel=0.25)


def test_qps_warmup_call_is_untimed():
    queries = VectorSet(np.zeros((10, 2), dtype=np.float32))
    calls = []

    def searcher(q):
        # First (warm-up) call is slow; if it were timed, QPS would drop
        # far below the steady-state figure.
        _spin(0.05 if not calls else 0.001)
        calls.append(1)

    qps = measure_qps(searcher, queries, repeats=5)
    assert len(calls) == 6
    assert qps == pytest.approx(10 / 0.001, rel=0.3)


def test_qps_errors():
    queries = VectorSet(np.zeros((10, 2), dtype=np.float32))
    with pytest.raises(ValueError):
        measure_qps(lambda q: None, queries, repeats=0)
    with pytest.raises(ValueError):
        measure_qps(lambda q: None,
                    VectorSet(np.zeros((0, 0), dtype=np.float32)), repeats=1)


# ---------------------------------------------------------------------------
# memory_estimate

def _manual_index(count, dim, degree):
    values = np.zeros((count, dim), dtype=np.float32)
    neighbors = np.tile(np.arange(degree, dtype=np.int32), count) if count else \
        np.zeros(0, dtype=np.int32)
    offsets = np.arange(count + 1, dtype=np.int64) * degree
    return GraphIndex(base=VectorSet(values), offsets=offsets,
                      neighbors=neighbors, max_degree=max(degree, 1),
                      default_entry=0, repaired=np.zeros(0, dtype=np.int64))


def test_memory_empty_index_is_header_only():
    index = _manual_index(0, 0, 0)
    assert memory_estimate(index) == INDEX_HEADER_BYTES


def test_memory_formula_by_hand():
    index = _manual_index(1000, 16, 8)
    edges = sum(len(index.neighbors_of(i)) for i in range(1000))
    expected = INDEX_HEADER_BYTES + 1000 * 16 * 4 + 1000 * 8 + edges * 4
    assert edges == 8000
    assert memory_estimate(index) == expected


def test_memory_pca_delta_is_additive():
    index = _manual_index(100, 16, 4)
    basis = np.zeros((16, 8))
    basis[:8, :8] = np.eye(8)
    pca = PcaModel(mean=np.zeros(16), basis=basis,
                   eigenvalues=np.zeros(8), d0=16, d=8)
    delta = memory_estimate(index, pca=pca) - memory_estimate(index)
    assert delta == (16 + 16 * 8) * 4 + PCA_HEADER_BYTES


def test_memory_selector_delta_is_additive():
    index = _manual_index(100, 16, 4)
    selector = EntryPointSelector(
        num_clusters=3, means=np.zeros((3, 16)),
        centroid_ids=np.array([0, 1, 2], dtype=np.int64),
        objective=np.zeros(1))
    delta = memory_estimate(index, selector=selector) - memory_estimate(index)
    assert delta == (3 * 16 + 3) * 4 + SELECTOR_HEADER_BYTES


# ---------------------------------------------------------------------------
# BenchReport

def test_bench_report_json_schema():
    rep = BenchReport(recall_at_k=0.93, qps=1234.5, memory_bytes=999,
                      repeats=10, k=10)
    obj = json.loads(rep.to_json())
    assert set(obj) == {"recall_at_k", "qps", "memory_bytes", "repeats", "k"}
    assert BenchReport.from_dict(obj) == rep
