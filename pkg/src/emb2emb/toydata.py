"""Small synthetic corpora for desk-scale experiments.

* :func:`sentences` draws from a toy restaurant-review grammar.
* :func:`rewrite_pairs` builds a parallel corpus whose targets replace a
  sentence-initial "complex" adjective with its plain synonym.
* :func:`marker_corpus` builds a two-style corpus in which style is carried
  by exactly one of five positive or five negative marker words.
"""
from __future__ import annotations

import numpy as np

from .text import LabeledCorpus, ParallelCorpus

NOUNS = ("food service staff pizza place room menu coffee waiter table "
         "bread soup music price salad view beer hotel burger dessert").split()
ADJECTIVES = "hot cold small large new old fresh local quiet busy".split()
VERBS = "was seemed looked felt tasted became stayed remained sounded appeared".split()
COMPLEX = {
    "scalding": "hot", "frigid": "cold", "minuscule": "small", "enormous": "large",
    "novel": "new", "ancient": "old", "tranquil": "quiet", "bustling": "busy",
}
POSITIVE = "great good lovely excellent amazing".split()
NEGATIVE = "bad awful terrible poor horrible".split()

_TEMPLATES = (
    "the {a} {n} {v} {m}",
    "our {n} {v} {m} .",
    "the {n} and the {n2} {v} {m}",
    "{m} {n} with {a} {n2}",
    "the {a} {n} {v} {m} today",
    "my {n} {v} {a} and {m}",
    "this {n} is {m}",
)
_REWRITE_TEMPLATES = (
    "{a} {n} {v} {m}",
    "{a} {n} and the {n2} {v} {m}",
    "{a} {n} {v} {m} today",
    "{a} {n} with {m} {n2}",
)


def _fill(rng, template, marker, adjectives):
    n, n2 = rng.choice(NOUNS, size=2, replace=False)
    return template.format(a=rng.choice(adjectives), n=n, n2=n2, v=rng.choice(VERBS), m=marker)


def sentences(n: int, seed: int = 0, markers=POSITIVE + NEGATIVE, unique: bool = True) -> list[str]:
    rng = np.random.default_rng(seed)
    out, seen = [], set()
    while len(out) < n:
        s = _fill(rng, _TEMPLATES[rng.integers(len(_TEMPLATES))], rng.choice(markers), ADJECTIVES)
        if unique and s in seen:
            continue
        seen.add(s)
        out.append(s)
    return out


def rewrite(sentence: str) -> str:
    return " ".join(COMPLEX.get(t, t) for t in sentence.split())


def rewrite_pairs(n: int, seed: int = 0) -> ParallelCorpus:
    """Sources open with a complex adjective; targets are their token-wise rewrites.

    Keeping the rewritten token at the start of the sentence makes the
    source/target code difference a smooth function of the source code,
    which a one-layer mapping can learn from 500 pairs.
    """
    rng = np.random.default_rng(seed)
    complex_adj = list(COMPLEX)
    src, seen = [], set()
    while len(src) < n:
        template = _REWRITE_TEMPLATES[rng.integers(len(_REWRITE_TEMPLATES))]
        s = _fill(rng, template, rng.choice(POSITIVE + NEGATIVE), complex_adj)
        if s not in seen:
            seen.add(s)
            src.append(s)
    return ParallelCorpus(src, [rewrite(s) for s in src])


def marker_corpus(n_per_class: int, seed: int = 0) -> LabeledCorpus:
    """Label 1 sentences carry a positive marker, label 0 a negative one."""
    neg = sentences(n_per_class, seed=seed * 2 + 1, markers=NEGATIVE)
    pos = sentences(n_per_class, seed=seed * 2 + 2, markers=POSITIVE)
    return LabeledCorpus(neg + pos, [0] * len(neg) + [1] * len(pos))


def has_marker(sentence: str, label: int) -> bool:
    words = POSITIVE if label == 1 else NEGATIVE
    toks = sentence.split()
    return any(w in toks for w in words)
