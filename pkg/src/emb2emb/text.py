"""Vocabulary, corpus loading, word-drop noise and padded batching."""
from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<s>", "</s>", "<unk>")
MAX_TOKENS = 100
DEFAULT_VOCAB_CAP = 30000


class Vocab:
    """Bijective token/id mapping with four fixed reserved ids."""

    def __init__(self, tokens: Sequence[str] = (), cap: int = DEFAULT_VOCAB_CAP):
        if cap < len(RESERVED) + 1:
            raise ValueError(f"vocabulary cap must be at least {len(RESERVED) + 1}, got {cap}")
        self.cap = cap
        self.itos = list(RESERVED)
        self.stoi = {tok: i for i, tok in enumerate(RESERVED)}
        for tok in tokens:
            if tok in self.stoi:
                raise ValueError(f"duplicate token {tok!r}")
            if len(self.itos) >= cap:
                raise ValueError(f"more than {cap} tokens")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, tok):
        return tok in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos

    def id(self, tok: str) -> int:
        return self.stoi.get(tok, UNK)

    def fingerprint(self) -> str:
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, cap: int = DEFAULT_VOCAB_CAP) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if tuple(lines[:4]) != RESERVED:
            raise ValueError(f"{path}: first four lines must be the reserved tokens {RESERVED}")
        return cls(lines[4:], cap=max(cap, len(lines)))


def tokenize(line: str) -> list[str]:
    return line.split()


def build_vocab(lines, cap: int = DEFAULT_VOCAB_CAP) -> Vocab:
    """Keep the most frequent whitespace tokens; ties go to the earlier first occurrence."""
    counts: Counter = Counter()
    first: dict[str, int] = {}
    for line in lines:
        for tok in tokenize(line):
            if tok in RESERVED:
                continue
            counts[tok] += 1
            first.setdefault(tok, len(first))
    ranked = sorted(counts, key=lambda t: (-counts[t], first[t]))
    return Vocab(ranked[: cap - len(RESERVED)], cap=cap)


def encode_text(s: str, vocab: Vocab, max_len: int = MAX_TOKENS) -> list[int]:
    return [vocab.id(t) for t in tokenize(s)[:max_len]]


def decode_tokens(ids, vocab: Vocab) -> str:
    out = []
    for i in ids:
        i = int(i)
        if i == EOS:
            break
        if i in (PAD, BOS):
            continue
        out.append(vocab.itos[i])
    return " ".join(out)


@dataclass(frozen=True)
class NoiseConfig:
    p_drop: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_drop <= 1.0:
            raise ValueError(f"p_drop must lie in [0, 1], got {self.p_drop}")


def apply_noise(ids: Sequence[int], cfg: NoiseConfig, rng: np.random.Generator) -> list[int]:
    """Drop each token independently with probability ``cfg.p_drop``.

    If every token would be dropped, one uniformly chosen token survives.
    """
    if len(ids) == 0:
        raise ValueError("cannot apply noise to an empty sequence")
    keep = rng.random(len(ids)) >= cfg.p_drop
    if not keep.any():
        keep[rng.integers(len(ids))] = True
    return [t for t, k in zip(ids, keep) if k]


class Batch(NamedTuple):
    index: np.ndarray     # positions in the source corpus
    ids: np.ndarray       # B x T, right-padded with PAD
    lengths: np.ndarray   # true lengths


def pad_batch(seqs: Sequence[Sequence[int]], min_len: int = 0) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    width = max(int(lengths.max(initial=0)), min_len)
    ids = np.full((len(seqs), width), PAD, dtype=np.int64)
    for row, s in enumerate(seqs):
        ids[row, : len(s)] = s
    return ids, lengths


def batch_indices(n: int, batch_size: int, shuffle: bool = False, rng=None) -> Iterator[np.ndarray]:
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = rng.permutation(n) if shuffle else np.arange(n)
    for lo in range(0, n, batch_size):
        yield order[lo: lo + batch_size]


def batch_iter(corpus: Sequence[Sequence[int]], batch_size: int, shuffle: bool = False,
               rng=None) -> Iterator[Batch]:
    for idx in batch_indices(len(corpus), batch_size, shuffle, rng):
        ids, lengths = pad_batch([corpus[i] for i in idx])
        yield Batch(idx, ids, lengths)


# -- corpora -----------------------------------------------------------------

@dataclass
class ParallelCorpus:
    sources: list[str]
    targets: list[str]

    def __post_init__(self):
        if len(self.sources) != len(self.targets):
            raise ValueError(f"{len(self.sources)} sources but {len(self.targets)} targets")

    def __len__(self):
        return len(self.sources)


@dataclass
class LabeledCorpus:
    texts: list[str]
    labels: list[int]

    def __post_init__(self):
        if len(self.texts) != len(self.labels):
            raise ValueError("texts and labels differ in length")
        bad = {a for a in self.labels if a not in (0, 1)}
        if bad:
            raise ValueError(f"labels must be 0 or 1, found {sorted(bad)}")

    def __len__(self):
        return len(self.texts)

    def of_class(self, label: int) -> list[str]:
        return [t for t, a in zip(self.texts, self.labels) if a == label]


def read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def load_parallel(source_path, target_path) -> ParallelCorpus:
    return ParallelCorpus(read_lines(source_path), read_lines(target_path))


def load_labeled(path) -> LabeledCorpus:
    texts, labels = [], []
    for n, line in enumerate(read_lines(path), 1):
        if not line.strip():
            continue
        label, sep, text = line.partition("\t")
        if not sep or label not in ("0", "1"):
            raise ValueError(f"{path}:{n}: expected 'label<TAB>text' with label 0 or 1")
        texts.append(text)
        labels.append(int(label))
    return LabeledCorpus(texts, labels)


def load_labeled_files(neg_path, pos_path) -> LabeledCorpus:
    neg = [l for l in read_lines(neg_path) if l.strip()]
    pos = [l for l in read_lines(pos_path) if l.strip()]
    return LabeledCorpus(neg + pos, [0] * len(neg) + [1] * len(pos))


def write_labeled(path, corpus: LabeledCorpus) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for text, label in zip(corpus.texts, corpus.labels):
            fh.write(f"{label}\t{text}\n")
