"""Key-value datastores of decoder context vectors with nearest-neighbor search.

A datastore maps context vectors (keys) to the target tokens that were
generated in those contexts (values), keeping per-entry source-language
provenance. Search is either an exhaustive exact scan or a cell-probe
index (k-means-style cells, probe the closest cells) whose results can be
checked against the exact oracle by probing every cell.
"""

from __future__ import annotations

import json
import os
import re
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    CorruptFileError,
    DimensionMismatchError,
    EmptyDatastoreError,
    EmptyInputError,
    IncompatibleStoresError,
    InsufficientEntriesError,
    MalformedDumpError,
)

RDMP_MAGIC = b"RDMP1\x00"
KDS_MAGIC = b"KDS1\x00\x00"

KMEANS_ITERS = 10
DEFAULT_TRAIN_SIZE = 65536

_CHUNK_ROWS = 65536
_LANG_RE = re.compile(r"^[a-z][a-z0-9]*$")


def check_lang_code(code: str) -> str:
    """Validate a language tag (non-empty, ASCII lowercase)."""
    if not isinstance(code, str) or not _LANG_RE.match(code):
        raise MalformedDumpError(f"invalid language code: {code!r}")
    return code


@dataclass(frozen=True)
class ReprRecord:
    """One dumped translation context: a key vector plus its target token."""

    vector: np.ndarray
    token_id: int
    sentence_id: int
    timestep: int
    lang: str


@dataclass(frozen=True)
class Neighbor:
    """One retrieved entry: index, squared-L2 distance, value token, provenance."""

    entry_index: int
    distance: float
    token_id: int
    lang: str


@dataclass(frozen=True)
class IndexSpec:
    """Search-index configuration, sufficient to rebuild deterministically."""

    kind: str = "exact-scan"  # "exact-scan" | "cell-probe"
    n_cells: int = 0
    n_probe: int = 0
    train_size: int = DEFAULT_TRAIN_SIZE


def squared_distances(keys: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Squared-L2 distances from ``q`` to every row of ``keys``.

    Keys are float32 storage; the subtraction and accumulation happen in
    float64 so that exact-scan and cell-probe paths produce bit-identical
    per-row distances (each row is reduced independently of the others).
    """
    q64 = np.asarray(q, dtype=np.float64)
    n = keys.shape[0]
    out = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CHUNK_ROWS):
        chunk = keys[start:start + _CHUNK_ROWS].astype(np.float64)
        chunk -= q64
        out[start:start + _CHUNK_ROWS] = np.einsum("ij,ij->i", chunk, chunk)
    return out


def _topk(dists: np.ndarray, candidates: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Smallest-k by (distance, entry_index); lower entry index wins ties."""
    order = np.lexsort((candidates, dists))[:k]
    return candidates[order], dists[order]


class ExactScanIndex:
    """Exhaustive scan; the ground-truth top-k under squared-L2."""

    kind = "exact-scan"

    def __init__(self, keys: np.ndarray):
        self._keys = keys

    def search(self, q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        dists = squared_distances(self._keys, q)
        return _topk(dists, np.arange(dists.size, dtype=np.int64), k)


class CellProbeIndex:
    """Inverted-file index: entries bucketed by nearest centroid.

    Centroids start from the first ``n_cells`` distinct entries and are
    refined with a fixed number of Lloyd iterations over a deterministic
    prefix subsample, trading cluster quality for reproducibility. A query
    scans only the ``n_probe`` cells whose centroids are closest; probing
    every cell reproduces the exact scan, tie-breaks included.
    """

    kind = "cell-probe"

    def __init__(self, keys: np.ndarray, n_cells: int, n_probe: int,
                 train_size: int = DEFAULT_TRAIN_SIZE):
        if n_cells < 1 or n_probe < 1:
            raise ValueError("n_cells and n_probe must be positive")
        self._keys = keys
        self.n_probe = n_probe
        centroids = _initial_centroids(keys, n_cells)
        centroids = _refine_centroids(centroids, keys[:max(train_size, 1)])
        self.centroids = centroids
        self.n_cells = centroids.shape[0]
        assign = _assign_cells(keys, centroids)
        order = np.argsort(assign, kind="stable")
        bounds = np.searchsorted(assign[order], np.arange(self.n_cells + 1))
        self._cells = [order[bounds[c]:bounds[c + 1]] for c in range(self.n_cells)]

    def search(self, q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        cdists = squared_distances(self.centroids, np.asarray(q, dtype=np.float64))
        cell_order = np.lexsort((np.arange(self.n_cells), cdists))
        probe = self.n_probe
        while True:
            candidates = np.concatenate([self._cells[c] for c in cell_order[:probe]])
            if candidates.size >= k or probe >= self.n_cells:
                break
            probe += 1  # expand until enough candidates to honor k
        candidates = np.sort(candidates)
        dists = squared_distances(self._keys[candidates], q)
        return _topk(dists, candidates, k)


def _initial_centroids(keys: np.ndarray, n_cells: int) -> np.ndarray:
    seen: set[bytes] = set()
    picks: list[int] = []
    for i in range(keys.shape[0]):
        b = keys[i].tobytes()
        if b not in seen:
            seen.add(b)
            picks.append(i)
            if len(picks) == n_cells:
                break
    return keys[picks].astype(np.float64)


def _refine_centroids(centroids: np.ndarray, train: np.ndarray) -> np.ndarray:
    train64 = train.astype(np.float64)
    for _ in range(KMEANS_ITERS):
        assign = _assign_cells(train, centroids)
        for c in range(centroids.shape[0]):
            members = train64[assign == c]
            if members.size:  # empty cells keep their previous centroid
                centroids[c] = members.mean(axis=0)
    return centroids


def _assign_cells(keys: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    cnorm = np.einsum("ij,ij->i", centroids, centroids)
    assign = np.empty(keys.shape[0], dtype=np.int64)
    for start in range(0, keys.shape[0], _CHUNK_ROWS):
        chunk = keys[start:start + _CHUNK_ROWS].astype(np.float64)
        d = cnorm - 2.0 * (chunk @ centroids.T)  # ||x||^2 constant per row
        assign[start:start + _CHUNK_ROWS] = np.argmin(d, axis=1)
    return assign


def _build_index(keys: np.ndarray, spec: IndexSpec):
    if spec.kind == "exact-scan":
        return ExactScanIndex(keys)
    if spec.kind == "cell-probe":
        return CellProbeIndex(keys, spec.n_cells, spec.n_probe, spec.train_size)
    raise ValueError(f"unknown index kind: {spec.kind}")


class Datastore:
    """Immutable collection of (context vector -> token) entries with provenance.

    Concurrent readers are safe once built; no operation mutates a live store.
    """

    def __init__(self, dim: int, vocab_size: int, keys: np.ndarray,
                 token_ids: np.ndarray, sentence_ids: np.ndarray,
                 timesteps: np.ndarray, lang_codes: tuple[str, ...],
                 lang_indices: np.ndarray, index_spec: IndexSpec):
        self.dim = dim
        self.vocab_size = vocab_size
        self.keys = keys
        self.token_ids = token_ids
        self.sentence_ids = sentence_ids
        self.timesteps = timesteps
        self.lang_codes = lang_codes
        self.lang_indices = lang_indices
        self.index_spec = index_spec
        self.index = _build_index(keys, index_spec)
        counts = np.bincount(lang_indices, minlength=len(lang_codes))
        self.languages = {code: int(counts[i]) for i, code in enumerate(lang_codes)}

    def __len__(self) -> int:
        return self.keys.shape[0]

    @property
    def total(self) -> int:
        return self.keys.shape[0]

    def record(self, i: int) -> ReprRecord:
        return ReprRecord(
            vector=self.keys[i],
            token_id=int(self.token_ids[i]),
            sentence_id=int(self.sentence_ids[i]),
            timestep=int(self.timesteps[i]),
            lang=self.lang_codes[self.lang_indices[i]],
        )

    def iter_records(self) -> Iterator[ReprRecord]:
        return (self.record(i) for i in range(len(self)))


def build_datastore(records: Iterable[ReprRecord], dim: int, vocab_size: int,
                    index_kind: str = "exact-scan",
                    index_params: dict | None = None) -> Datastore:
    """Build a datastore from a record stream, preserving input order.

    Raises MalformedDumpError when a record contradicts the declared
    dimension or vocabulary, EmptyDatastoreError on an empty stream.
    """
    if dim < 1:
        raise MalformedDumpError(f"declared dimension must be positive, got {dim}")
    vectors: list[np.ndarray] = []
    token_ids: list[int] = []
    sentence_ids: list[int] = []
    timesteps: list[int] = []
    lang_codes: list[str] = []
    lang_lookup: dict[str, int] = {}
    lang_indices: list[int] = []
    for rec in records:
        vec = np.asarray(rec.vector, dtype=np.float32)
        if vec.shape != (dim,):
            raise MalformedDumpError(
                f"record vector has length {vec.shape}, dump declares d={dim}")
        if not 0 <= rec.token_id < vocab_size:
            raise MalformedDumpError(
                f"token id {rec.token_id} outside declared vocabulary of {vocab_size}")
        if rec.sentence_id < 0 or rec.timestep < 0:
            raise MalformedDumpError("sentence_id and timestep must be non-negative")
        code = check_lang_code(rec.lang)
        if code not in lang_lookup:
            lang_lookup[code] = len(lang_codes)
            lang_codes.append(code)
        vectors.append(vec)
        token_ids.append(rec.token_id)
        sentence_ids.append(rec.sentence_id)
        timesteps.append(rec.timestep)
        lang_indices.append(lang_lookup[code])
    if not vectors:
        raise EmptyDatastoreError("dump contains no records")
    spec = _index_spec(index_kind, index_params, len(vectors))
    return Datastore(
        dim=dim,
        vocab_size=vocab_size,
        keys=np.vstack(vectors),
        token_ids=np.asarray(token_ids, dtype=np.uint32),
        sentence_ids=np.asarray(sentence_ids, dtype=np.uint32),
        timesteps=np.asarray(timesteps, dtype=np.uint16),
        lang_codes=tuple(lang_codes),
        lang_indices=np.asarray(lang_indices, dtype=np.uint16),
        index_spec=spec,
    )


def _index_spec(kind: str, params: dict | None, n_entries: int) -> IndexSpec:
    params = dict(params or {})
    if kind == "exact-scan":
        return IndexSpec(kind="exact-scan")
    if kind == "cell-probe":
        n_cells = min(int(params.get("n_cells", 64)), n_entries)
        n_probe = min(int(params.get("n_probe", 8)), n_cells)
        train_size = int(params.get("train_size", DEFAULT_TRAIN_SIZE))
        return IndexSpec(kind="cell-probe", n_cells=n_cells, n_probe=n_probe,
                         train_size=train_size)
    raise ValueError(f"unknown index kind: {kind}")


def merge_datastores(stores: Sequence[Datastore]) -> Datastore:
    """Concatenate stores into one, keeping entry order and provenance.

    Duplicate (vector, token) entries across source languages are kept.
    The merged index is rebuilt with the first store's configuration.
    """
    if not stores:
        raise EmptyInputError("no stores to merge")
    first = stores[0]
    for s in stores[1:]:
        if s.dim != first.dim:
            raise IncompatibleStoresError(
                f"dimension mismatch: {first.dim} vs {s.dim}")
        if s.vocab_size != first.vocab_size:
            raise IncompatibleStoresError(
                f"vocabulary mismatch: {first.vocab_size} vs {s.vocab_size}")
    lang_codes: list[str] = []
    lang_lookup: dict[str, int] = {}
    parts = []
    for s in stores:
        remap = np.empty(len(s.lang_codes), dtype=np.uint16)
        for i, code in enumerate(s.lang_codes):
            if code not in lang_lookup:
                lang_lookup[code] = len(lang_codes)
                lang_codes.append(code)
            remap[i] = lang_lookup[code]
        parts.append(remap[s.lang_indices])
    return Datastore(
        dim=first.dim,
        vocab_size=first.vocab_size,
        keys=np.vstack([s.keys for s in stores]),
        token_ids=np.concatenate([s.token_ids for s in stores]),
        sentence_ids=np.concatenate([s.sentence_ids for s in stores]),
        timesteps=np.concatenate([s.timesteps for s in stores]),
        lang_codes=tuple(lang_codes),
        lang_indices=np.concatenate(parts),
        index_spec=first.index_spec,
    )


def query(store: Datastore, q: np.ndarray, k: int) -> list[Neighbor]:
    """Return the k nearest entries by squared-L2 distance, ascending.

    Equal distances break toward the lower entry index.
    """
    qv = np.asarray(q, dtype=np.float64)
    if qv.shape != (store.dim,):
        raise DimensionMismatchError(
            f"query has shape {qv.shape}, store dimension is {store.dim}")
    if k < 1:
        raise ValueError("k must be positive")
    if k > len(store):
        raise InsufficientEntriesError(
            f"k={k} exceeds the {len(store)} stored entries")
    idx, dists = store.index.search(qv, k)
    return [
        Neighbor(
            entry_index=int(i),
            distance=float(d),
            token_id=int(store.token_ids[i]),
            lang=store.lang_codes[store.lang_indices[i]],
        )
        for i, d in zip(idx, dists)
    ]


@dataclass(frozen=True)
class ProvenanceStat:
    """Observed vs. size-proportional retrieval share for one language."""

    p_obs: float
    p_uni: float
    ratio: float


def provenance_stats(store: Datastore,
                     queries: Sequence[tuple[np.ndarray, int]]) -> dict[str, ProvenanceStat]:
    """Per-language retrieval shares over a query workload.

    p_obs is each language's fraction of all retrieved neighbors, p_uni its
    fraction of stored entries, and ratio = p_obs / p_uni measures over- or
    undersampling relative to a size-proportional draw.
    """
    if not queries:
        raise EmptyInputError("provenance stats need at least one query")
    retrieved = np.zeros(len(store.lang_codes), dtype=np.int64)
    for q, k in queries:
        for nb in query(store, q, k):
            retrieved[store.lang_codes.index(nb.lang)] += 1
    total_retrieved = int(retrieved.sum())
    total_entries = len(store)
    stats = {}
    for i, code in enumerate(store.lang_codes):
        p_obs = retrieved[i] / total_retrieved
        p_uni = store.languages[code] / total_entries
        stats[code] = ProvenanceStat(p_obs=p_obs, p_uni=p_uni, ratio=p_obs / p_uni)
    return stats


# ---------------------------------------------------------------------------
# Binary formats
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DumpHeader:
    """Declared shape of a representation dump."""

    dim: int
    vocab_size: int
    lang: str


def _dump_record_dtype(dim: int) -> np.dtype:
    return np.dtype([("sid", "<u4"), ("ts", "<u2"), ("tok", "<u4"), ("vec", "<f4", (dim,))])


def _store_record_dtype(dim: int) -> np.dtype:
    return np.dtype([("sid", "<u4"), ("ts", "<u2"), ("tok", "<u4"), ("lang", "<u2"),
                     ("vec", "<f4", (dim,))])


def write_dump(path: str | os.PathLike, header: DumpHeader,
               records: Iterable[ReprRecord]) -> int:
    """Write records to an RDMP1 file; returns the record count."""
    check_lang_code(header.lang)
    recs = list(records)
    arr = np.empty(len(recs), dtype=_dump_record_dtype(header.dim))
    for i, rec in enumerate(recs):
        vec = np.asarray(rec.vector, dtype=np.float32)
        if vec.shape != (header.dim,):
            raise MalformedDumpError(
                f"record vector has shape {vec.shape}, dump declares d={header.dim}")
        arr[i] = (rec.sentence_id, rec.timestep, rec.token_id, vec)
    lang_bytes = header.lang.encode("utf-8")
    with open(path, "wb") as f:
        f.write(RDMP_MAGIC)
        f.write(struct.pack("<II", header.dim, header.vocab_size))
        f.write(struct.pack("<I", len(lang_bytes)))
        f.write(lang_bytes)
        f.write(struct.pack("<Q", len(recs)))
        f.write(arr.tobytes())
    return len(recs)


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CorruptFileError(f"truncated while reading {what}")
    return data


def read_dump(path: str | os.PathLike) -> tuple[DumpHeader, list[ReprRecord]]:
    """Read an RDMP1 file back into records."""
    with open(path, "rb") as f:
        if _read_exact(f, len(RDMP_MAGIC), "magic") != RDMP_MAGIC:
            raise CorruptFileError(f"{path}: bad magic, not an RDMP1 dump")
        dim, vocab_size = struct.unpack("<II", _read_exact(f, 8, "header"))
        (lang_len,) = struct.unpack("<I", _read_exact(f, 4, "header"))
        lang = _read_exact(f, lang_len, "lang code").decode("utf-8")
        (count,) = struct.unpack("<Q", _read_exact(f, 8, "record count"))
        dtype = _dump_record_dtype(dim)
        raw = _read_exact(f, count * dtype.itemsize, "records")
    arr = np.frombuffer(raw, dtype=dtype)
    header = DumpHeader(dim=dim, vocab_size=vocab_size, lang=check_lang_code(lang))
    records = [
        ReprRecord(vector=arr["vec"][i].copy(), token_id=int(arr["tok"][i]),
                   sentence_id=int(arr["sid"][i]), timestep=int(arr["ts"][i]),
                   lang=lang)
        for i in range(count)
    ]
    return header, records


def _manifest_path(path: str | os.PathLike) -> str:
    return os.path.splitext(os.fspath(path))[0] + ".manifest.json"


def save_datastore(store: Datastore, path: str | os.PathLike,
                   manifest: dict | None = None) -> None:
    """Write a KDS1 file plus its informational JSON sidecar manifest."""
    arr = np.empty(len(store), dtype=_store_record_dtype(store.dim))
    arr["sid"] = store.sentence_ids
    arr["ts"] = store.timesteps
    arr["tok"] = store.token_ids
    arr["lang"] = store.lang_indices
    arr["vec"] = store.keys
    spec = store.index_spec
    kind_code = 0 if spec.kind == "exact-scan" else 1
    with open(path, "wb") as f:
        f.write(KDS_MAGIC)
        f.write(struct.pack("<II", store.dim, store.vocab_size))
        f.write(struct.pack("<BIII", kind_code, spec.n_cells, spec.n_probe, spec.train_size))
        f.write(struct.pack("<I", len(store.lang_codes)))
        for code in store.lang_codes:
            raw = code.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<Q", store.languages[code]))
        f.write(struct.pack("<Q", len(store)))
        f.write(arr.tobytes())
    sidecar = {"tokenizer": "whitespace", "corpus": "unspecified"}
    sidecar.update(manifest or {})
    with open(_manifest_path(path), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def load_datastore(path: str | os.PathLike) -> Datastore:
    """Read a KDS1 file; the search index is rebuilt deterministically."""
    with open(path, "rb") as f:
        if _read_exact(f, len(KDS_MAGIC), "magic") != KDS_MAGIC:
            raise CorruptFileError(f"{path}: bad magic, not a KDS1 datastore")
        dim, vocab_size = struct.unpack("<II", _read_exact(f, 8, "header"))
        kind_code, n_cells, n_probe, train_size = struct.unpack(
            "<BIII", _read_exact(f, 13, "index spec"))
        (n_langs,) = struct.unpack("<I", _read_exact(f, 4, "provenance table"))
        lang_codes = []
        declared_counts = []
        for _ in range(n_langs):
            (code_len,) = struct.unpack("<I", _read_exact(f, 4, "provenance table"))
            code = _read_exact(f, code_len, "lang code").decode("utf-8")
            (count,) = struct.unpack("<Q", _read_exact(f, 8, "provenance table"))
            lang_codes.append(check_lang_code(code))
            declared_counts.append(count)
        (count,) = struct.unpack("<Q", _read_exact(f, 8, "record count"))
        dtype = _store_record_dtype(dim)
        raw = _read_exact(f, count * dtype.itemsize, "records")
    arr = np.frombuffer(raw, dtype=dtype)
    if count == 0:
        raise EmptyDatastoreError(f"{path}: datastore holds no entries")
    lang_indices = arr["lang"].copy()
    if lang_indices.size and int(lang_indices.max()) >= n_langs:
        raise CorruptFileError(f"{path}: entry references an undeclared language")
    actual = np.bincount(lang_indices, minlength=n_langs)
    if list(actual) != declared_counts:
        raise CorruptFileError(f"{path}: provenance table disagrees with entries")
    if kind_code == 0:
        spec = IndexSpec(kind="exact-scan")
    else:
        spec = IndexSpec(kind="cell-probe", n_cells=n_cells, n_probe=n_probe,
                         train_size=train_size)
    return Datastore(
        dim=dim,
        vocab_size=vocab_size,
        keys=arr["vec"].copy(),
        token_ids=arr["tok"].copy(),
        sentence_ids=arr["sid"].copy(),
        timesteps=arr["ts"].copy(),
        lang_codes=tuple(lang_codes),
        lang_indices=lang_indices,
        index_spec=spec,
    )
