"""Dataset features over parallel corpora and linear transfer prediction.

Five symmetric features describe a language pair: relative corpus size,
vocabulary occupancy ratio, source subword overlap, multi-parallel overlap,
and target n-gram overlap. Together with loaded linguistic distances they
feed a leave-one-out linear regression that predicts representational
similarity, plus permutation importance over the fitted model.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .errors import (
    EmptyInputError,
    IncompleteTableError,
    InsufficientDataError,
    SingularSystemError,
)

DATASET_FEATURES = (
    "size_ratio",
    "vocab_occupancy_ratio",
    "src_subword_overlap",
    "multi_parallel_overlap",
    "tgt_ngram_overlap",
)
LINGUISTIC_FEATURES = ("geographic", "genetic", "inventory", "syntactic",
                       "phonological")

RIDGE_FALLBACK_FACTOR = 1e-6


@dataclass(frozen=True)
class Corpus:
    """One language's parallel data: source sentences aligned to pivot targets.

    ``alignment_keys`` identify which rows across corpora refer to the same
    pivot sentence; they default to the target-side content, which is the
    right identity for multi-parallel reference data. Generated targets can
    differ per language for the same key.
    """

    lang: str
    source_sentences: tuple[tuple[int, ...], ...]
    target_sentences: tuple[tuple[int, ...], ...]
    alignment_keys: tuple[Hashable, ...] | None = None

    def __post_init__(self):
        if len(self.source_sentences) < 1:
            raise EmptyInputError(f"corpus {self.lang!r} has no sentences")
        if len(self.source_sentences) != len(self.target_sentences):
            raise ValueError(
                f"corpus {self.lang!r}: source and target sides disagree in length")
        if (self.alignment_keys is not None
                and len(self.alignment_keys) != len(self.source_sentences)):
            raise ValueError(f"corpus {self.lang!r}: one key per sentence required")

    @classmethod
    def from_lists(cls, lang: str, sources: Sequence[Sequence[int]],
                   targets: Sequence[Sequence[int]],
                   keys: Sequence[Hashable] | None = None) -> "Corpus":
        return cls(lang=lang,
                   source_sentences=tuple(tuple(s) for s in sources),
                   target_sentences=tuple(tuple(t) for t in targets),
                   alignment_keys=tuple(keys) if keys is not None else None)

    @property
    def size(self) -> int:
        return len(self.source_sentences)

    @property
    def vocab_used(self) -> frozenset[int]:
        return frozenset(tok for sent in self.source_sentences for tok in sent)

    @property
    def keys(self) -> tuple[Hashable, ...]:
        if self.alignment_keys is not None:
            return self.alignment_keys
        return self.target_sentences

    @property
    def target_keys(self) -> frozenset[Hashable]:
        """Identity keys; keys shared across corpora mark multi-parallel rows."""
        return frozenset(self.keys)

    def targets_by_key(self) -> dict[Hashable, tuple[int, ...]]:
        """First target sentence per key; duplicate keys collapse to the first."""
        out: dict[Hashable, tuple[int, ...]] = {}
        for key, target in zip(self.keys, self.target_sentences):
            out.setdefault(key, target)
        return out


def size_ratio(c1: Corpus, c2: Corpus) -> float:
    """Smaller corpus size over larger; 1.0 for equal sizes."""
    return min(c1.size, c2.size) / max(c1.size, c2.size)


def vocab_occupancy_ratio(c1: Corpus, c2: Corpus, vocab_size: int) -> float:
    """min/max of the two languages' used fractions of the global vocabulary."""
    if vocab_size < 1:
        raise EmptyInputError("global vocabulary is empty")
    occ1 = len(c1.vocab_used) / vocab_size
    occ2 = len(c2.vocab_used) / vocab_size
    if max(occ1, occ2) == 0.0:
        return 1.0  # both unused: identical occupancy
    return min(occ1, occ2) / max(occ1, occ2)


def src_subword_overlap(c1: Corpus, c2: Corpus) -> float:
    """Jaccard overlap of the source-side subword usage sets."""
    v1 = c1.vocab_used
    v2 = c2.vocab_used
    if not v1 or not v2:
        raise EmptyInputError("subword overlap needs non-empty usage sets")
    return len(v1 & v2) / len(v1 | v2)


def multi_parallel_overlap(c1: Corpus, c2: Corpus) -> float:
    """Jaccard overlap of target-side identity keys."""
    k1 = c1.target_keys
    k2 = c2.target_keys
    return len(k1 & k2) / len(k1 | k2)


def _ngram_counts(tokens: Sequence[int], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def tgt_ngram_overlap(c1: Corpus, c2: Corpus, n_max: int = 1) -> float:
    """Raw co-occurrence weight of target n-grams over shared sentences.

    For each target sentence present in both corpora, the n-gram count
    vectors of the two sides are multiplied elementwise, summed, and weighted
    by n; orders run from 1 to n_max (unigrams by default). The raw value is
    unbounded; min-max scaling to [0, 1] happens across a pair set in
    pair_features_table.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    targets1 = c1.targets_by_key()
    targets2 = c2.targets_by_key()
    total = 0.0
    for key in targets1.keys() & targets2.keys():
        for n in range(1, n_max + 1):
            counts1 = _ngram_counts(targets1[key], n)
            counts2 = _ngram_counts(targets2[key], n)
            total += n * sum(counts1[g] * counts2[g] for g in counts1.keys() & counts2.keys())
    return total


@dataclass(frozen=True)
class PairFeatures:
    """The five dataset features (plus loaded linguistic distances) for a pair."""

    lang1: str
    lang2: str
    size_ratio: float
    vocab_occupancy_ratio: float
    src_subword_overlap: float
    multi_parallel_overlap: float
    tgt_ngram_overlap: float
    linguistic: dict[str, float] = field(default_factory=dict)

    def feature_vector(self, names: Sequence[str]) -> np.ndarray:
        out = []
        for name in names:
            if name in DATASET_FEATURES:
                out.append(getattr(self, name))
            elif name in self.linguistic:
                out.append(self.linguistic[name])
            else:
                raise IncompleteTableError(
                    f"pair ({self.lang1}, {self.lang2}) lacks feature {name!r}")
        return np.asarray(out, dtype=np.float64)


def load_distance_table(path: str | os.PathLike) -> dict[tuple[str, str], dict[str, float]]:
    """Linguistic distances per pair, TSV columns per LINGUISTIC_FEATURES."""
    table: dict[tuple[str, str], dict[str, float]] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 + len(LINGUISTIC_FEATURES):
                raise ValueError(f"bad distance row: {line!r}")
            values = [float(v) for v in parts[2:]]
            if any(not 0.0 <= v <= 1.0 for v in values):
                raise ValueError(f"distances must lie in [0, 1]: {line!r}")
            key = tuple(sorted((parts[0], parts[1])))
            table[key] = dict(zip(LINGUISTIC_FEATURES, values))
    return table


def pair_features_table(corpora: dict[str, Corpus], vocab_size: int,
                        distances: dict[tuple[str, str], dict[str, float]] | None = None,
                        n_max: int = 1) -> dict[tuple[str, str], PairFeatures]:
    """All unordered pair features, with tgt n-gram overlap min-max scaled.

    A degenerate pair set (all raw overlap values equal) scales to 1.0 when
    the shared value is positive and 0.0 otherwise.
    """
    langs = sorted(corpora)
    if len(langs) < 2:
        raise InsufficientDataError("need at least two corpora")
    pairs = [(a, b) for i, a in enumerate(langs) for b in langs[i + 1:]]
    raw_overlap = {p: tgt_ngram_overlap(corpora[p[0]], corpora[p[1]], n_max) for p in pairs}
    lo = min(raw_overlap.values())
    hi = max(raw_overlap.values())
    table = {}
    for lang1, lang2 in pairs:
        c1, c2 = corpora[lang1], corpora[lang2]
        raw = raw_overlap[(lang1, lang2)]
        if hi > lo:
            scaled = (raw - lo) / (hi - lo)
        else:
            scaled = 1.0 if raw > 0 else 0.0
        ling = {}
        if distances is not None:
            key = tuple(sorted((lang1, lang2)))
            if key not in distances:
                raise IncompleteTableError(f"distance table lacks pair {key}")
            ling = dict(distances[key])
        table[(lang1, lang2)] = PairFeatures(
            lang1=lang1,
            lang2=lang2,
            size_ratio=size_ratio(c1, c2),
            vocab_occupancy_ratio=vocab_occupancy_ratio(c1, c2, vocab_size),
            src_subword_overlap=src_subword_overlap(c1, c2),
            multi_parallel_overlap=multi_parallel_overlap(c1, c2),
            tgt_ngram_overlap=scaled,
            linguistic=ling,
        )
    return table


@dataclass(frozen=True)
class LinearModel:
    """Ordinary least squares fit y = X @ coef + intercept."""

    coef: np.ndarray
    intercept: float
    feature_names: tuple[str, ...]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.coef + self.intercept


def fit_linear(x: np.ndarray, y: np.ndarray, feature_names: Sequence[str],
               ridge: float = 0.0) -> LinearModel:
    """Normal-equation OLS with intercept; ridge is not applied to the intercept."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = x.shape
    aug = np.hstack([x, np.ones((n, 1))])
    penalty = ridge * np.eye(d + 1)
    penalty[d, d] = 0.0
    try:
        theta = np.linalg.solve(aug.T @ aug + penalty, aug.T @ y)
    except np.linalg.LinAlgError:
        raise SingularSystemError(
            "design matrix is rank-deficient; retry with ridge > 0") from None
    return LinearModel(coef=theta[:d], intercept=float(theta[d]),
                       feature_names=tuple(feature_names))


def _fit_with_fallback(x: np.ndarray, y: np.ndarray,
                       feature_names: Sequence[str]) -> LinearModel:
    try:
        return fit_linear(x, y, feature_names)
    except SingularSystemError:
        gram_scale = float(np.trace(x.T @ x)) / max(x.shape[1], 1)
        ridge = max(RIDGE_FALLBACK_FACTOR * gram_scale, 1e-12)
        return fit_linear(x, y, feature_names, ridge=ridge)


def design_matrix(pairs: Sequence[tuple[PairFeatures, float]],
                  feature_names: Sequence[str] | None = None
                  ) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    """Stack pair features into (X, y); linguistic columns included when present."""
    if not pairs:
        raise EmptyInputError("no feature pairs given")
    if feature_names is None:
        names = list(DATASET_FEATURES)
        names += [f for f in LINGUISTIC_FEATURES
                  if all(f in pf.linguistic for pf, _ in pairs)]
    else:
        names = list(feature_names)
    x = np.vstack([pf.feature_vector(names) for pf, _ in pairs])
    y = np.asarray([target for _, target in pairs], dtype=np.float64)
    return x, y, tuple(names)


@dataclass(frozen=True)
class RegressionReport:
    """Leave-one-out results plus coefficients and permutation importances."""

    fold_langs: tuple[str, ...]
    fold_mae: tuple[float, ...]
    mean_mae: float
    feature_names: tuple[str, ...]
    coefficients: dict[str, float]
    intercept: float
    importances: dict[str, tuple[float, float]]


def predict_xsim_loo(pairs: Sequence[tuple[PairFeatures, float]],
                     languages: Sequence[str] | None = None, *,
                     macro: bool = False, n_shuffles: int = 50,
                     seed: int = 0) -> RegressionReport:
    """Leave-one-language-out linear regression of similarity targets.

    Each fold holds out every pair involving one language and fits on the
    rest. The reported MAE pools the per-pair errors of all folds
    (micro average); ``macro=True`` averages the fold means instead.
    Coefficients and permutation importances come from a final fit on all
    pairs.
    """
    if languages is None:
        languages = sorted({code for pf, _ in pairs for code in (pf.lang1, pf.lang2)})
    if len(languages) < 3:
        raise InsufficientDataError("leave-one-out needs at least 3 languages")
    x, y, names = design_matrix(pairs)
    fold_mae = []
    pooled_errors: list[float] = []
    for held_out in languages:
        test_idx = [i for i, (pf, _) in enumerate(pairs)
                    if held_out in (pf.lang1, pf.lang2)]
        train_idx = [i for i in range(len(pairs)) if i not in set(test_idx)]
        if not test_idx or not train_idx:
            raise InsufficientDataError(
                f"fold for {held_out!r} leaves an empty train or test set")
        model = _fit_with_fallback(x[train_idx], y[train_idx], names)
        errors = np.abs(model.predict(x[test_idx]) - y[test_idx])
        fold_mae.append(float(errors.mean()))
        pooled_errors.extend(errors.tolist())
    mean_mae = float(np.mean(fold_mae)) if macro else float(np.mean(pooled_errors))
    final = _fit_with_fallback(x, y, names)
    importances = permutation_importance(final, x, y, n_shuffles=n_shuffles, seed=seed)
    return RegressionReport(
        fold_langs=tuple(languages),
        fold_mae=tuple(fold_mae),
        mean_mae=mean_mae,
        feature_names=names,
        coefficients={name: float(c) for name, c in zip(names, final.coef)},
        intercept=final.intercept,
        importances=importances,
    )


def permutation_importance(model: LinearModel, x: np.ndarray, y: np.ndarray,
                           n_shuffles: int = 50, seed: int = 0
                           ) -> dict[str, tuple[float, float]]:
    """Mean (and spread of) MAE increase when one feature column is shuffled.

    Seeded and bit-reproducible: the generator is consumed in a fixed order
    over (feature, shuffle) so identical seeds give identical results.
    """
    if n_shuffles < 1:
        raise ValueError("n_shuffles must be at least 1")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] == 0:
        raise EmptyInputError("validation set is empty")
    rng = np.random.default_rng(seed)
    baseline = float(np.mean(np.abs(model.predict(x) - y)))
    out = {}
    for j, name in enumerate(model.feature_names):
        drops = np.empty(n_shuffles)
        for s in range(n_shuffles):
            shuffled = x.copy()
            shuffled[:, j] = shuffled[rng.permutation(x.shape[0]), j]
            drops[s] = float(np.mean(np.abs(model.predict(shuffled) - y))) - baseline
        out[name] = (float(drops.mean()), float(drops.std()))
    return out
