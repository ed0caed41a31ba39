"""Seeded synthetic corpora for desk-scale pipeline runs.

Targets are random word sequences; each source language renders a target
through its own fixed word permutation, so languages are exact relabelings
of one another. That gives the count-based toy model something learnable
and gives cross-lingual alignment a recoverable ground truth. Every output
is a pure function of the seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .corpus import RESERVED_TOKENS, Vocabulary, write_sentences
from .features import LINGUISTIC_FEATURES


@dataclass(frozen=True)
class ToySpec:
    """Shape of a generated dataset."""

    langs: tuple[str, ...]
    tgt_lang: str = "en"
    n_train: int = 200
    n_test: int = 20
    n_words: int = 50
    min_len: int = 3
    max_len: int = 9
    coverage: float = 1.0  # fraction of the target pool each language sees
    seed: int = 0


@dataclass(frozen=True)
class ToyData:
    """In-memory generated dataset, before any files are written."""

    spec: ToySpec
    vocab: Vocabulary
    # per language: line-aligned (source, target) word sequences
    train: dict[str, list[tuple[list[str], list[str]]]]
    test: dict[str, list[tuple[list[str], list[str]]]]
    bleu_rows: dict[str, tuple[float, float]]
    distance_rows: dict[tuple[str, str], dict[str, float]]


def generate(spec: ToySpec) -> ToyData:
    if spec.n_train < 1 or spec.n_words < 1:
        raise ValueError("need at least one sentence and one word")
    if not 0.0 < spec.coverage <= 1.0:
        raise ValueError("coverage must lie in (0, 1]")
    if spec.min_len < 1 or spec.max_len < spec.min_len:
        raise ValueError("bad sentence length range")
    rng = np.random.default_rng(spec.seed)
    words = [f"w{i:03d}" for i in range(spec.n_words)]
    vocab = Vocabulary(list(RESERVED_TOKENS) + words)

    # targets follow a seeded first-order Markov chain, so the count-based
    # toy model has transferable bigram structure to learn
    transitions = rng.dirichlet(np.full(spec.n_words, 0.1), size=spec.n_words)

    def sample_sentences(count: int) -> list[list[str]]:
        lengths = rng.integers(spec.min_len, spec.max_len + 1, size=count)
        sentences = []
        for n in lengths:
            state = int(rng.integers(0, spec.n_words))
            sent = [words[state]]
            for _ in range(int(n) - 1):
                state = int(rng.choice(spec.n_words, p=transitions[state]))
                sent.append(words[state])
            sentences.append(sent)
        return sentences

    target_pool = sample_sentences(spec.n_train)
    test_pool = sample_sentences(max(spec.n_test, 0))
    permutations = {
        lang: {words[i]: words[j]
               for i, j in enumerate(rng.permutation(spec.n_words))}
        for lang in spec.langs
    }

    def render(lang: str, target: list[str]) -> list[str]:
        table = permutations[lang]
        return [table[w] for w in target]

    n_covered = max(1, int(round(spec.coverage * spec.n_train)))
    train = {}
    test = {}
    for lang in spec.langs:
        if n_covered < spec.n_train:
            picked = sorted(rng.choice(spec.n_train, size=n_covered, replace=False))
        else:
            picked = range(spec.n_train)
        train[lang] = [(render(lang, target_pool[i]), list(target_pool[i]))
                       for i in picked]
        test[lang] = [(render(lang, t), list(t)) for t in test_pool]

    bleu_rows = {}
    for lang in spec.langs:
        bilingual = float(np.clip(rng.normal(0.25, 0.08), 0.02, 0.9))
        multilingual = float(np.clip(bilingual + rng.normal(0.02, 0.05), 0.01, 0.95))
        bleu_rows[lang] = (bilingual, multilingual)
    distance_rows = {}
    ordered = sorted(spec.langs)
    for i, l1 in enumerate(ordered):
        for l2 in ordered[i + 1:]:
            distance_rows[(l1, l2)] = {
                name: float(rng.uniform(0.0, 1.0)) for name in LINGUISTIC_FEATURES
            }
    return ToyData(spec=spec, vocab=vocab, train=train, test=test,
                   bleu_rows=bleu_rows, distance_rows=distance_rows)


def write_dataset(data: ToyData, out_dir: str | os.PathLike) -> dict[str, str]:
    """Write corpus, vocab, alignment, score and distance files; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    out = os.fspath(out_dir)
    spec = data.spec
    paths = {}
    vocab_path = os.path.join(out, "vocab.txt")
    data.vocab.save(vocab_path)
    paths["vocab"] = vocab_path
    for lang in spec.langs:
        pair = f"{lang}-{spec.tgt_lang}"
        for split, pairs in (("train", data.train[lang]), ("test", data.test[lang])):
            if not pairs:
                continue
            src_path = os.path.join(out, f"{pair}.{split}.{lang}")
            tgt_path = os.path.join(out, f"{pair}.{split}.{spec.tgt_lang}")
            write_sentences(src_path, [s for s, _ in pairs])
            write_sentences(tgt_path, [t for _, t in pairs])
            paths[f"{pair}.{split}"] = src_path
    for i, l1 in enumerate(spec.langs):
        for l2 in spec.langs[i + 1:]:
            align_path = os.path.join(out, f"alignment.{l1}-{l2}.tsv")
            targets2 = {" ".join(t): j for j, (_, t) in enumerate(data.train[l2])}
            with open(align_path, "w", encoding="utf-8") as f:
                for sid1, (_, target) in enumerate(data.train[l1]):
                    sid2 = targets2.get(" ".join(target))
                    if sid2 is not None:
                        f.write(f"{sid1}\t{sid2}\n")
            paths[f"alignment.{l1}-{l2}"] = align_path
    bleu_path = os.path.join(out, "bleu-table.tsv")
    with open(bleu_path, "w", encoding="utf-8") as f:
        f.write("#scale=unit\n")
        for lang in spec.langs:
            bi, multi = data.bleu_rows[lang]
            f.write(f"{lang}\t{bi:.6f}\t{multi:.6f}\n")
    paths["bleu_table"] = bleu_path
    dist_path = os.path.join(out, "distances.tsv")
    with open(dist_path, "w", encoding="utf-8") as f:
        for (l1, l2), row in sorted(data.distance_rows.items()):
            values = "\t".join(f"{row[name]:.6f}" for name in LINGUISTIC_FEATURES)
            f.write(f"{l1}\t{l2}\t{values}\n")
    paths["distances"] = dist_path
    return paths
