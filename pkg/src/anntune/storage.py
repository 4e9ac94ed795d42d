"""Single-file binary index persistence.

Layout: 4-byte magic, u32 format version, then tagged sections — 4-byte
ASCII tag, u64 payload length, payload.  Required sections: HEAD (counts
and flags), VECS (float32 vectors), ADJA (CSR adjacency + repair flags).
Optional: VIDS (original ids), PCAM (PCA model), KSEL (entry selector),
META (UTF-8 JSON build parameters).  Everything is little-endian and byte
deterministic, so rebuilding with the same seed and config reproduces the
file exactly.  Loader errors name the offending section.
"""

from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from .dataset import VectorSet
from .entrypoint import EntryPointSelector
from .graph import GraphIndex
from .pca import PcaModel

__all__ = ["FORMAT_VERSION", "IndexFormatError", "LoadedIndex", "load_index",
           "save_index"]

_MAGIC = b"ANTN"
FORMAT_VERSION = 1
_KNOWN_TAGS = (b"HEAD", b"VECS", b"VIDS", b"ADJA", b"PCAM", b"KSEL", b"META")

_FLAG_IDS = 1
_FLAG_PCA = 2
_FLAG_SELECTOR = 4
_FLAG_META = 8


class IndexFormatError(ValueError):
    """Raised when an index file is malformed; messages name the section."""


@dataclasses.dataclass
class LoadedIndex:
    index: GraphIndex
    pca: PcaModel | None
    selector: EntryPointSelector | None
    meta: dict


def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload


def save_index(path, index: GraphIndex, pca: PcaModel | None = None,
               selector: EntryPointSelector | None = None,
               meta: dict | None = None) -> None:
    """Write the index and optional pipeline components to one file."""
    flags = 0
    if index.base.ids is not None:
        flags |= _FLAG_IDS
    if pca is not None:
        flags |= _FLAG_PCA
    if selector is not None:
        flags |= _FLAG_SELECTOR
    if meta is not None:
        flags |= _FLAG_META
    head = struct.pack("<QQIQIQ", index.base.count, index.base.dim,
                       index.max_degree, index.default_entry, flags,
                       index.repaired.size)
    parts = [_MAGIC, struct.pack("<I", FORMAT_VERSION),
             _section(b"HEAD", head),
             _section(b"VECS", index.base.values.astype("<f4").tobytes())]
    if index.base.ids is not None:
        parts.append(_section(b"VIDS", index.base.ids.astype("<i8").tobytes()))
    adja = (index.offsets.astype("<i8").tobytes()
            + index.neighbors.astype("<i4").tobytes()
            + index.repaired.astype("<i8").tobytes())
    parts.append(_section(b"ADJA", adja))
    if pca is not None:
        payload = (struct.pack("<QQ", pca.d0, pca.d)
                   + pca.mean.astype("<f8").tobytes()
                   + pca.basis.astype("<f8").tobytes()
                   + pca.eigenvalues.astype("<f8").tobytes())
        parts.append(_section(b"PCAM", payload))
    if selector is not None:
        clusters, dim = selector.means.shape
        payload = (struct.pack("<QQ", clusters, dim)
                   + selector.means.astype("<f8").tobytes()
                   + selector.centroid_ids.astype("<i8").tobytes())
        parts.append(_section(b"KSEL", payload))
    if meta is not None:
        parts.append(_section(b"META", json.dumps(meta, sort_keys=True).encode()))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise IndexFormatError(msg)


def _take(payload: bytes, offset: int, nbytes: int, section: str, what: str):
    _require(offset + nbytes <= len(payload),
             f"section '{section}': {what} needs {nbytes} bytes at offset "
             f"{offset}, payload has {len(payload)}")
    return payload[offset:offset + nbytes], offset + nbytes


def load_index(path) -> LoadedIndex:
    """Read an index file written by ``save_index``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    _require(len(raw) >= 8, f"{path}: too short for magic and version")
    _require(raw[:4] == _MAGIC, f"{path}: bad magic {raw[:4]!r}")
    version = struct.unpack_from("<I", raw, 4)[0]
    _require(version == FORMAT_VERSION,
             f"{path}: unsupported index format version {version} "
             f"(supported: {FORMAT_VERSION})")
    sections: dict[bytes, bytes] = {}
    pos = 8
    while pos < len(raw):
        _require(pos + 12 <= len(raw),
                 f"truncated section header at byte {pos}")
        tag = raw[pos:pos + 4]
        _require(tag in _KNOWN_TAGS, f"unknown section tag {tag!r} at byte {pos}")
        (length,) = struct.unpack_from("<Q", raw, pos + 4)
        pos += 12
        _require(pos + length <= len(raw),
                 f"truncated section '{tag.decode()}': payload of {length} "
                 f"bytes exceeds file end")
        _require(tag not in sections, f"duplicate section {tag!r}")
        sections[tag] = raw[pos:pos + length]
        pos += length
    for required in (b"HEAD", b"VECS", b"ADJA"):
        _require(required in sections,
                 f"missing required section '{required.decode()}'")

    head = sections[b"HEAD"]
    _require(len(head) == struct.calcsize("<QQIQIQ"),
             f"section 'HEAD' has {len(head)} bytes, expected "
             f"{struct.calcsize('<QQIQIQ')}")
    count, dim, max_degree, default_entry, flags, n_repaired = struct.unpack(
        "<QQIQIQ", head)

    vecs = sections[b"VECS"]
    _require(len(vecs) == count * dim * 4,
             f"section 'VECS' has {len(vecs)} bytes, expected {count * dim * 4}")
    values = np.frombuffer(vecs, dtype="<f4").reshape(count, dim).copy()

    ids = None
    if flags & _FLAG_IDS:
        _require(b"VIDS" in sections, "missing section 'VIDS' promised by HEAD")
        vids = sections[b"VIDS"]
        _require(len(vids) == count * 8,
                 f"section 'VIDS' has {len(vids)} bytes, expected {count * 8}")
        ids = np.frombuffer(vids, dtype="<i8").copy()

    adja = sections[b"ADJA"]
    off_bytes = (count + 1) * 8
    _require(len(adja) >= off_bytes,
             f"section 'ADJA' has {len(adja)} bytes, offsets need {off_bytes}")
    offsets = np.frombuffer(adja, dtype="<i8", count=count + 1).copy()
    n_edges = int(offsets[-1]) if count + 1 > 0 else 0
    expect = off_bytes + n_edges * 4 + n_repaired * 8
    _require(len(adja) == expect,
             f"section 'ADJA' has {len(adja)} bytes, expected {expect}")
    neighbors = np.frombuffer(adja, dtype="<i4", count=n_edges,
                              offset=off_bytes).copy()
    repaired = np.frombuffer(adja, dtype="<i8", count=n_repaired,
                             offset=off_bytes + n_edges * 4).copy()

    try:
        base = VectorSet(values, ids=ids)
        index = GraphIndex(base=base, offsets=offsets, neighbors=neighbors,
                           max_degree=int(max_degree),
                           default_entry=int(default_entry), repaired=repaired)
    except ValueError as exc:
        raise IndexFormatError(f"inconsistent index data: {exc}") from exc

    pca = None
    if flags & _FLAG_PCA:
        _require(b"PCAM" in sections, "missing section 'PCAM' promised by HEAD")
        payload = sections[b"PCAM"]
        hdr, off = _take(payload, 0, 16, "PCAM", "header")
        d0, d = struct.unpack("<QQ", hdr)
        mean_b, off = _take(payload, off, d0 * 8, "PCAM", "mean")
        basis_b, off = _take(payload, off, d0 * d * 8, "PCAM", "basis")
        eig_b, off = _take(payload, off, d * 8, "PCAM", "eigenvalues")
        _require(off == len(payload),
                 f"section 'PCAM' has {len(payload) - off} trailing bytes")
        try:
            pca = PcaModel(mean=np.frombuffer(mean_b, "<f8").copy(),
                           basis=np.frombuffer(basis_b, "<f8").reshape(d0, d).copy(),
                           eigenvalues=np.frombuffer(eig_b, "<f8").copy(),
                           d0=int(d0), d=int(d))
        except ValueError as exc:
            raise IndexFormatError(f"section 'PCAM': {exc}") from exc

    selector = None
    if flags & _FLAG_SELECTOR:
        _require(b"KSEL" in sections, "missing section 'KSEL' promised by HEAD")
        payload = sections[b"KSEL"]
        hdr, off = _take(payload, 0, 16, "KSEL", "header")
        clusters, sdim = struct.unpack("<QQ", hdr)
        means_b, off = _take(payload, off, clusters * sdim * 8, "KSEL", "means")
        cid_b, off = _take(payload, off, clusters * 8, "KSEL", "centroid ids")
        _require(off == len(payload),
                 f"section 'KSEL' has {len(payload) - off} trailing bytes")
        try:
            selector = EntryPointSelector(
                num_clusters=int(clusters),
                means=np.frombuffer(means_b, "<f8").reshape(clusters, sdim).copy(),
                centroid_ids=np.frombuffer(cid_b, "<i8").copy(),
                objective=np.zeros(0))
        except ValueError as exc:
            raise IndexFormatError(f"section 'KSEL': {exc}") from exc

    meta: dict = {}
    if flags & _FLAG_META:
        _require(b"META" in sections, "missing section 'META' promised by HEAD")
        try:
            meta = json.loads(sections[b"META"].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise IndexFormatError(f"section 'META': invalid JSON ({exc})") from exc

    return LoadedIndex(index=index, pca=pca, selector=selector, meta=meta)
