"""Binary index persistence: round-trips, byte determinism, corruption errors."""

import struct

import numpy as np
import pytest

from anntune.antihub import antihub_subsample, k_occurrence
from anntune.entrypoint import kmeans_fit, select_entries
from anntune.graph import SearchParams, build_index, search
from anntune.pca import pca_fit, pca_transform
from anntune.storage import (FORMAT_VERSION, IndexFormatError, load_index,
                             save_index)

from conftest import make_gaussian


def _full_stack(tmp_path, n=120, dim=6, with_ids=True):
    base = make_gaussian(n, dim, seed=3)
    if with_ids:
        profile = k_occurrence(base, 4)
        base = antihub_subsample(base, profile, 0.8)
    model = pca_fit(base, dim - 2)
    reduced = pca_transform(model, base)
    index = build_index(reduced, max_degree=6, build_pool=12)
    selector = kmeans_fit(reduced, 4, seed=1)
    meta = {"alpha": 0.8, "d": dim - 2, "note": "unit test"}
    path = tmp_path / "index.bin"
    save_index(path, index, pca=model, selector=selector, meta=meta)
    return path, index, model, selector, meta


def test_round_trip_all_components(tmp_path):
    path, index, model, selector, meta = _full_stack(tmp_path)
    loaded = load_index(path)
    assert np.array_equal(loaded.index.base.values, index.base.values)
    assert np.array_equal(loaded.index.base.ids, index.base.ids)
    assert np.array_equal(loaded.index.offsets, index.offsets)
    assert np.array_equal(loaded.index.neighbors, index.neighbors)
    assert np.array_equal(loaded.index.repaired, index.repaired)
    assert loaded.index.max_degree == index.max_degree
    assert loaded.index.default_entry == index.default_entry
    assert np.array_equal(loaded.pca.mean, model.mean)
    assert np.array_equal(loaded.pca.basis, model.basis)
    assert np.array_equal(loaded.pca.eigenvalues, model.eigenvalues)
    assert (loaded.pca.d0, loaded.pca.d) == (model.d0, model.d)
    assert np.array_equal(loaded.selector.means, selector.means)
    assert np.array_equal(loaded.selector.centroid_ids, selector.centroid_ids)
    assert loaded.meta == meta


def test_round_trip_minimal_index(tmp_path):
    base = make_gaussian(50, 4, seed=4)
    index = build_index(base, max_degree=4, build_pool=8)
    path = tmp_path / "bare.bin"
    save_index(path, index)
    loaded = load_index(path)
    assert loaded.pca is None and loaded.selector is None and loaded.meta == {}
    assert loaded.index.base.ids is None
    q = base.values[7]
    a = search(index, q, SearchParams(k=5, pool_size=20))
    b = search(loaded.index, q, SearchParams(k=5, pool_size=20))
    assert a.ids.tolist() == b.ids.tolist()
    assert a.distances.tolist() == b.distances.tolist()


def test_loaded_search_identical(tmp_path):
    path, index, model, selector, _ = _full_stack(tmp_path)
    loaded = load_index(path)
    queries = make_gaussian(10, 6, seed=5)
    reduced_q = pca_transform(model, queries).values
    entries = select_entries(selector, reduced_q)
    loaded_entries = select_entries(loaded.selector,
                                    pca_transform(loaded.pca, queries).values)
    assert np.array_equal(entries, loaded_entries)


def test_save_is_byte_deterministic(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    p1, *_ = _full_stack(tmp_path / "a")
    p2, *_ = _full_stack(tmp_path / "b")
    assert p1.read_bytes() == p2.read_bytes()


def test_rejects_bad_magic(tmp_path):
    path, *_ = _full_stack(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(IndexFormatError, match="bad magic"):
        load_index(path)


def test_rejects_unsupported_version(tmp_path):
    path, *_ = _full_stack(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", FORMAT_VERSION + 1)
    path.write_bytes(bytes(raw))
    with pytest.raises(IndexFormatError, match="version"):
        load_index(path)


def test_rejects_truncated_payload_naming_section(tmp_path):
    path, *_ = _full_stack(tmp_path)
    raw = path.read_bytes()
    path.write_bytes(raw[:len(raw) // 2])
    with pytest.raises(IndexFormatError, match="section '"):
        load_index(path)


def test_rejects_truncated_vecs(tmp_path):
    base = make_gaussian(30, 4, seed=6)
    index = build_index(base, max_degree=4, build_pool=8)
    path = tmp_path / "x.bin"
    save_index(path, index)
    raw = path.read_bytes()
    cut = raw.index(b"VECS") + 12 + 10  # drop mid-payload
    path.write_bytes(raw[:cut])
    with pytest.raises(IndexFormatError, match="VECS"):
        load_index(path)


def test_rejects_unknown_tag(tmp_path):
    path, *_ = _full_stack(tmp_path)
    raw = bytearray(path.read_bytes())
    pos = raw.index(b"ADJA")
    raw[pos:pos + 4] = b"WHAT"
    path.write_bytes(bytes(raw))
    with pytest.raises(IndexFormatError, match="unknown section tag"):
        load_index(path)


def test_rejects_duplicate_section(tmp_path):
    base = make_gaussian(20, 3, seed=7)
    index = build_index(base, max_degree=4, build_pool=8)
    path = tmp_path / "x.bin"
    save_index(path, index)
    raw = path.read_bytes()
    pos = raw.index(b"VECS")
    length = struct.unpack_from("<Q", raw, pos + 4)[0]
    section = raw[pos:pos + 12 + length]
    path.write_bytes(raw + section)
    with pytest.raises(IndexFormatError, match="duplicate section"):
        load_index(path)


def test_rejects_missing_required_section(tmp_path):
    base = make_gaussian(20, 3, seed=8)
    index = build_index(base, max_degree=4, build_pool=8)
    path = tmp_path / "x.bin"
    save_index(path, index)
    raw = path.read_bytes()
    pos = raw.index(b"ADJA")
    length = struct.unpack_from("<Q", raw, pos + 4)[0]
    path.write_bytes(raw[:pos] + raw[pos + 12 + length:])
    with pytest.raises(IndexFormatError, match="missing required section 'ADJA'"):
        load_index(path)


def test_rejects_garbage_file(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"\x00" * 3)
    with pytest.raises(IndexFormatError, match="too short"):
        load_index(path)


def test_format_error_is_value_error():
    assert issubclass(IndexFormatError, ValueError)
