"""Cross-lingual representation alignment with least-squares linear maps.

Paired translation contexts from two single-language datastores (same target
sentence, same timestep, same target token) train a d x d matrix mapping one
language's representation space into the other's via the normal equations.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    CorruptFileError,
    DimensionMismatchError,
    EmptyPairsError,
    SingularSystemError,
)
from .vecstore import Datastore, check_lang_code, _read_exact

KLM_MAGIC = b"KLM1\x00\x00"

DEFAULT_RIDGE_FACTOR = 1e-10  # times trace(X'X)/d when ridge is not given


@dataclass(frozen=True)
class LinearMap:
    """A fitted d x d map from source_lang representations to target_lang ones."""

    matrix: np.ndarray
    source_lang: str
    target_lang: str
    ridge: float
    residual: float | None = None  # training sum of squared errors; not persisted

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatchError(f"map matrix must be square, got {m.shape}")
        if not np.isfinite(m).all():
            raise ValueError("map matrix contains non-finite entries")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class PairedContexts:
    """Row-aligned context vectors from two languages sharing target sentences."""

    rows_src: np.ndarray
    rows_tgt: np.ndarray
    src_lang: str = "l1"
    tgt_lang: str = "l2"

    def __post_init__(self):
        if self.rows_src.shape != self.rows_tgt.shape:
            raise DimensionMismatchError(
                f"paired rows disagree: {self.rows_src.shape} vs {self.rows_tgt.shape}")

    def __len__(self) -> int:
        return self.rows_src.shape[0]

    def swapped(self) -> "PairedContexts":
        """The same pairs with roles reversed, for fitting the inverse map."""
        return PairedContexts(rows_src=self.rows_tgt, rows_tgt=self.rows_src,
                              src_lang=self.tgt_lang, tgt_lang=self.src_lang)


def extract_training_pairs(store1: Datastore, store2: Datastore,
                           alignment: Sequence[tuple[int, int]]) -> PairedContexts:
    """Pair contexts from two single-language stores over aligned sentences.

    ``alignment`` maps sentence ids in store1 to sentence ids in store2 that
    share the same target sentence. Sentences whose decodes have different
    lengths are dropped; within a kept sentence, a row pair is emitted for
    every timestep where both stores hold the same target token.
    """
    for store in (store1, store2):
        if len(store.lang_codes) != 1:
            raise ValueError("training-pair extraction needs single-language stores")
    if store1.dim != store2.dim:
        raise DimensionMismatchError(
            f"stores disagree on dimension: {store1.dim} vs {store2.dim}")
    by_sentence1 = _entries_by_sentence(store1)
    by_sentence2 = _entries_by_sentence(store2)
    src_rows: list[np.ndarray] = []
    tgt_rows: list[np.ndarray] = []
    for sid1, sid2 in alignment:
        ent1 = by_sentence1.get(int(sid1))
        ent2 = by_sentence2.get(int(sid2))
        if ent1 is None or ent2 is None:
            continue
        if sorted(ent1) != sorted(ent2):  # timestep sets must match exactly
            continue
        for t in sorted(ent1):
            tok1, row1 = ent1[t]
            tok2, row2 = ent2[t]
            if tok1 == tok2:
                src_rows.append(store1.keys[row1])
                tgt_rows.append(store2.keys[row2])
    if not src_rows:
        raise EmptyPairsError("alignment produced no paired contexts")
    return PairedContexts(
        rows_src=np.vstack(src_rows).astype(np.float64),
        rows_tgt=np.vstack(tgt_rows).astype(np.float64),
        src_lang=store1.lang_codes[0],
        tgt_lang=store2.lang_codes[0],
    )


def _entries_by_sentence(store: Datastore) -> dict[int, dict[int, tuple[int, int]]]:
    out: dict[int, dict[int, tuple[int, int]]] = {}
    for i in range(len(store)):
        sid = int(store.sentence_ids[i])
        out.setdefault(sid, {})[int(store.timesteps[i])] = (int(store.token_ids[i]), i)
    return out


def fit_linear_map(pairs: PairedContexts, ridge: float | None = None) -> LinearMap:
    """Least-squares fit of A minimizing sum ||tgt_i - A src_i||^2 (+ ridge).

    ``ridge=None`` picks a tiny default (1e-6 * trace(X'X)/d) that keeps small
    synthetic systems well-posed without measurably moving the solution; an
    explicit 0.0 solves the plain normal equations and raises
    SingularSystemError on rank deficiency.
    """
    if len(pairs) < 1:
        raise EmptyPairsError("need at least one pair to fit a map")
    if ridge is not None and ridge < 0:
        raise ValueError("ridge must be non-negative")
    x = pairs.rows_src
    y = pairs.rows_tgt
    d = x.shape[1]
    gram = x.T @ x
    if ridge is None:
        ridge = DEFAULT_RIDGE_FACTOR * np.trace(gram) / d
    try:
        # solve (X'X + ridge I) A' = X'Y  ->  A = (solution)'
        solution = np.linalg.solve(gram + ridge * np.eye(d), x.T @ y)
    except np.linalg.LinAlgError:
        raise SingularSystemError(
            "normal equations are singular; retry with ridge > 0") from None
    matrix = solution.T
    residual = float(np.sum((y - x @ solution) ** 2))
    return LinearMap(matrix=matrix, source_lang=pairs.src_lang,
                     target_lang=pairs.tgt_lang, ridge=float(ridge),
                     residual=residual)


def apply_map(lin_map: LinearMap, v: np.ndarray) -> np.ndarray:
    """Map a single vector: A v."""
    vec = np.asarray(v, dtype=np.float64)
    if vec.shape != (lin_map.dim,):
        raise DimensionMismatchError(
            f"vector has shape {vec.shape}, map dimension is {lin_map.dim}")
    return lin_map.matrix @ vec


def map_datastore(store: Datastore, lin_map: LinearMap) -> Datastore:
    """Replace every key with its mapped image; values and provenance unchanged."""
    if store.dim != lin_map.dim:
        raise DimensionMismatchError(
            f"store dimension {store.dim} does not match map dimension {lin_map.dim}")
    mapped = (store.keys.astype(np.float64) @ lin_map.matrix.T).astype(np.float32)
    return Datastore(
        dim=store.dim,
        vocab_size=store.vocab_size,
        keys=mapped,
        token_ids=store.token_ids,
        sentence_ids=store.sentence_ids,
        timesteps=store.timesteps,
        lang_codes=store.lang_codes,
        lang_indices=store.lang_indices,
        index_spec=store.index_spec,
    )


def save_linear_map(lin_map: LinearMap, path: str | os.PathLike) -> None:
    """Write a KLM1 file: header, lang codes, ridge, row-major f32 matrix."""
    with open(path, "wb") as f:
        f.write(KLM_MAGIC)
        f.write(struct.pack("<I", lin_map.dim))
        for code in (lin_map.source_lang, lin_map.target_lang):
            raw = code.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
        f.write(struct.pack("<d", lin_map.ridge))
        f.write(lin_map.matrix.astype("<f4").tobytes())


def load_linear_map(path: str | os.PathLike) -> LinearMap:
    with open(path, "rb") as f:
        if _read_exact(f, len(KLM_MAGIC), "magic") != KLM_MAGIC:
            raise CorruptFileError(f"{path}: bad magic, not a KLM1 map")
        (dim,) = struct.unpack("<I", _read_exact(f, 4, "header"))
        codes = []
        for _ in range(2):
            (n,) = struct.unpack("<I", _read_exact(f, 4, "lang code"))
            codes.append(check_lang_code(_read_exact(f, n, "lang code").decode("utf-8")))
        (ridge,) = struct.unpack("<d", _read_exact(f, 8, "ridge"))
        raw = _read_exact(f, dim * dim * 4, "matrix")
    matrix = np.frombuffer(raw, dtype="<f4").reshape(dim, dim).astype(np.float64)
    return LinearMap(matrix=matrix, source_lang=codes[0], target_lang=codes[1],
                     ridge=ridge)
