"""Vector storage, fvecs I/O, synthetic data generation, and the exact
brute-force nearest-neighbor oracle.

Conventions used across the package:

* vectors are float32 rows, distances are squared L2 accumulated in
  float64 (see ``_kernels``), ties broken by ascending id;
* a ``VectorSet`` may carry ``ids`` mapping rows back to original
  database ids (set after subsampling); search-style results always
  report original ids.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from ._kernels import _knn_select

__all__ = [
    "FvecsFormatError",
    "NeighborList",
    "VectorSet",
    "all_pairs_knn",
    "brute_force_knn",
    "generate_synthetic",
    "load_fvecs",
    "save_fvecs",
]

# Separation of synthetic blob means, in units of the within-blob sigma.
_BLOB_SCALE = 4.0


class FvecsFormatError(ValueError):
    """An fvecs file violates the [int32 dim][dim x float32] record format."""


@dataclasses.dataclass
class VectorSet:
    """Dense row-major float32 matrix: a database, queries, or a projection.

    ``ids`` is optional and maps each row to an original database id; it is
    set by subsampling so downstream results stay comparable against
    full-database ground truth.
    """

    values: np.ndarray
    ids: np.ndarray | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values), dtype=np.float32)
        if v.ndim != 2:
            raise ValueError(f"values must be 2-D (count, dim), got shape {v.shape}")
        if v.shape[0] > 0 and v.shape[1] == 0:
            raise ValueError("dim must be positive for a non-empty VectorSet")
        if not np.isfinite(v).all():
            raise ValueError("values must be finite (no NaN/Inf)")
        self.values = v
        if self.ids is not None:
            ids = np.ascontiguousarray(np.asarray(self.ids), dtype=np.int64)
            if ids.shape != (v.shape[0],):
                raise ValueError(
                    f"ids length {ids.shape} does not match count {v.shape[0]}")
            if np.unique(ids).size != ids.size:
                raise ValueError("ids must be distinct")
            self.ids = ids

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def id_for(self, positions: np.ndarray) -> np.ndarray:
        """Map row positions to original database ids (identity if no ids)."""
        positions = np.asarray(positions, dtype=np.int64)
        if self.ids is None:
            return positions.copy()
        return self.ids[positions]

    def take(self, positions: np.ndarray) -> "VectorSet":
        """Row subset keeping track of original ids."""
        positions = np.asarray(positions, dtype=np.int64)
        return VectorSet(self.values[positions], ids=self.id_for(positions))


@dataclasses.dataclass
class NeighborList:
    """Result of one query: ids ascending by (distance, id), squared-L2
    distances non-decreasing."""

    ids: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        ids = np.ascontiguousarray(np.asarray(self.ids), dtype=np.int64)
        d = np.ascontiguousarray(np.asarray(self.distances), dtype=np.float64)
        if ids.ndim != 1 or d.shape != ids.shape:
            raise ValueError("ids and distances must be 1-D of equal length")
        if d.size and (d[0] < 0 or np.any(np.diff(d) < 0)):
            raise ValueError("distances must be non-negative and non-decreasing")
        if np.unique(ids).size != ids.size:
            raise ValueError("ids must be distinct")
        self.ids = ids
        self.distances = d

    def __len__(self) -> int:
        return self.ids.size


def load_fvecs(path) -> VectorSet:
    """Read an fvecs file: records of [int32 dim][dim x float32], little-endian.

    Errors name the byte offset for malformed record lengths and the record
    index (0-based) for inconsistent dims.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) == 0:
        return VectorSet(np.zeros((0, 0), dtype=np.float32))
    if len(raw) < 4:
        raise FvecsFormatError(
            f"{path}: malformed record length at byte offset 0 "
            f"(file holds {len(raw)} bytes, dim prefix needs 4)")
    dim0 = int(np.frombuffer(raw, dtype="<i4", count=1, offset=0)[0])
    if dim0 <= 0:
        raise FvecsFormatError(f"{path}: record 0 declares non-positive dim {dim0}")
    rec_bytes = 4 * (1 + dim0)
    if len(raw) % rec_bytes == 0:
        table = np.frombuffer(raw, dtype="<i4").reshape(-1, 1 + dim0)
        dims = table[:, 0]
        bad = np.flatnonzero(dims != dim0)
        if bad.size:
            i = int(bad[0])
            raise FvecsFormatError(
                f"{path}: record {i} declares dim {int(dims[i])}, "
                f"record 0 declared dim {dim0}")
        values = table[:, 1:].copy().view("<f4")
        try:
            return VectorSet(values)
        except ValueError as exc:
            raise FvecsFormatError(f"{path}: {exc}") from exc
    # File length is inconsistent with uniform records: rescan to locate
    # the precise failure.
    off = 0
    idx = 0
    while off < len(raw):
        avail = len(raw) - off
        if avail < 4:
            raise FvecsFormatError(
                f"{path}: malformed record length at byte offset {off} "
                f"(trailing {avail} bytes, dim prefix needs 4)")
        d = int(np.frombuffer(raw, dtype="<i4", count=1, offset=off)[0])
        if d != dim0:
            raise FvecsFormatError(
                f"{path}: record {idx} declares dim {d}, "
                f"record 0 declared dim {dim0}")
        need = 4 * (1 + d)
        if avail < need:
            raise FvecsFormatError(
                f"{path}: malformed record length at byte offset {off} "
                f"(record {idx} needs {need} bytes, {avail} available)")
        off += need
        idx += 1
    raise FvecsFormatError(f"{path}: inconsistent record layout")  # pragma: no cover


def save_fvecs(vs: VectorSet, path) -> None:
    """Write an fvecs file; ``load_fvecs`` round-trips it bit-exactly."""
    if vs.count == 0:
        with open(path, "wb") as fh:
            pass
        return
    buf = np.empty((vs.count, vs.dim + 1), dtype="<i4")
    buf[:, 0] = vs.dim
    buf[:, 1:] = vs.values.view(np.int32)
    with open(path, "wb") as fh:
        fh.write(buf.tobytes())


def generate_synthetic(n: int, dim: int, num_blobs: int = 8,
                       anisotropy: float = 1.0, seed: int = 0) -> VectorSet:
    """Gaussian mixture with well-separated means and geometric axis decay.

    Blob means are picked by greedy farthest-point selection from a seeded
    candidate cloud and scaled to ``_BLOB_SCALE`` sigmas apart; assignment is
    balanced round-robin.  Axis ``j`` of every vector is scaled by
    ``anisotropy**j``, so ``anisotropy=1`` is isotropic and smaller values
    concentrate variance in the leading axes (low intrinsic dimension, which
    PCA can exploit).  Deterministic for a fixed seed.
    """
    if num_blobs < 1 or n < num_blobs:
        raise ValueError(f"need n >= num_blobs >= 1, got n={n}, num_blobs={num_blobs}")
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    if not 0.0 <= anisotropy <= 1.0:
        raise ValueError(f"anisotropy must be in [0, 1], got {anisotropy}")
    rng = np.random.default_rng(seed)
    cand = rng.standard_normal((8 * num_blobs, dim))
    chosen = [0]
    d2 = ((cand - cand[0]) ** 2).sum(axis=1)
    for _ in range(num_blobs - 1):
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((cand - cand[nxt]) ** 2).sum(axis=1))
    means = cand[np.array(chosen)] * _BLOB_SCALE
    labels = np.arange(n) % num_blobs
    scales = float(anisotropy) ** np.arange(dim)
    points = (means[labels] + rng.standard_normal((n, dim))) * scales
    return VectorSet(points.astype(np.float32))


def _knn_points(base_values: np.ndarray, query_values: np.ndarray, kk: int,
                exclude_self: bool) -> tuple[np.ndarray, np.ndarray]:
    """Exact top-``kk`` (ids, distances) of each query against the base.

    float32 GEMM in query chunks for candidate generation, exact float64
    refinement for the reported ordering (see ``_kernels._knn_select``).
    With ``exclude_self`` the query block is assumed to be the base itself
    and row i skips id i.
    """
    n = base_values.shape[0]
    m = query_values.shape[0]
    norms64 = (base_values.astype(np.float64) ** 2).sum(axis=1)
    b_norms = norms64.astype(np.float32)
    b_norm_max = float(norms64.max()) if n else 0.0
    out_ids = np.empty((m, kk), dtype=np.int64)
    out_d = np.empty((m, kk), dtype=np.float64)
    cand = np.empty(n, dtype=np.int64)
    base_t = base_values.T
    chunk = max(256, min(4000, int(1.2e8 // max(n, 1))))
    for s in range(0, m, chunk):
        e = min(m, s + chunk)
        sims = query_values[s:e] @ base_t
        _knn_select(base_values, query_values[s:e], sims, b_norms, b_norm_max,
                    kk, s if exclude_self else -1, out_ids[s:e], out_d[s:e], cand)
    return out_ids, out_d


def brute_force_knn(base: VectorSet, queries: VectorSet, k: int) -> list[NeighborList]:
    """Exact k nearest neighbors per query, ties broken by ascending id.

    Returned ids are original database ids when ``base.ids`` is set.
    """
    if queries.dim != base.dim:
        raise ValueError(f"dim mismatch: base {base.dim}, queries {queries.dim}")
    if not 1 <= k <= base.count:
        raise ValueError(f"k must be in [1, {base.count}], got {k}")
    ids, dists = _knn_points(base.values, queries.values, k, exclude_self=False)
    mapped = base.ids[ids] if base.ids is not None else ids
    return [NeighborList(mapped[i], dists[i]) for i in range(queries.count)]


def all_pairs_knn(vs: VectorSet, kk: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact kNN rows of a set against itself, self excluded.

    Returns row positions (not mapped ids): this feeds graph construction
    and hubness profiling, which operate on positions.
    """
    if not 1 <= kk <= vs.count - 1:
        raise ValueError(f"kk must be in [1, count-1] = [1, {vs.count - 1}], got {kk}")
    return _knn_points(vs.values, vs.values, kk, exclude_self=True)
