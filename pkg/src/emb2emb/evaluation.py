"""BLEU, SARI, self-BLEU, transfer accuracy and tradeoff sweeps."""
from __future__ import annotations

import csv
import logging
import math
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)

MAX_ORDER = 4
SMOOTH_EPS = 1e-9
SWEEP_FIELDS = ("sweep_param", "value", "accuracy", "self_bleu", "bleu", "sari", "seconds", "checkpoint_hash")


def _toks(s) -> list[str]:
    return s.split() if isinstance(s, str) else list(s)


def ngrams(tokens, n) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


# -- BLEU ------------------------------------------------------------------------

class BleuStats(NamedTuple):
    matches: tuple      # clipped n-gram matches per order
    totals: tuple       # hypothesis n-gram counts per order (at least 1)
    hyp_len: int
    ref_len: int        # closest reference length, shorter wins ties


def bleu_stats(hyp, refs) -> BleuStats:
    hyp = _toks(hyp)
    refs = [_toks(r) for r in refs]
    if not refs:
        raise ValueError("every hypothesis needs at least one reference")
    matches, totals = [], []
    for n in range(1, MAX_ORDER + 1):
        counts = ngrams(hyp, n)
        max_ref: Counter = Counter()
        for r in refs:
            max_ref |= ngrams(r, n)
        matches.append(sum(min(c, max_ref[g]) for g, c in counts.items()))
        totals.append(max(1, sum(counts.values())))
    ref_len = min((len(r) for r in refs), key=lambda L: (abs(L - len(hyp)), L))
    return BleuStats(tuple(matches), tuple(totals), len(hyp), ref_len)


def bleu_from_stats(stats: Sequence[BleuStats], smooth: float = 0.0) -> float:
    matches = np.sum([s.matches for s in stats], axis=0).astype(float)
    totals = np.sum([s.totals for s in stats], axis=0).astype(float)
    hyp_len = sum(s.hyp_len for s in stats)
    ref_len = sum(s.ref_len for s in stats)
    if smooth > 0:
        matches = np.where(matches == 0, smooth, matches)
    elif np.any(matches == 0):
        return 0.0
    if hyp_len == 0:
        return 0.0
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return float(bp * math.exp(np.mean(np.log(matches / totals))))


def bleu(hypotheses, reference_sets) -> float:
    """Corpus BLEU-4 with uniform weights and brevity penalty, unsmoothed, in [0, 1]."""
    if len(hypotheses) == 0:
        raise ValueError("BLEU of an empty hypothesis set")
    if len(hypotheses) != len(reference_sets):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(reference_sets)} reference sets")
    return bleu_from_stats([bleu_stats(h, r) for h, r in zip(hypotheses, reference_sets)])


def sentence_bleu(hyp, refs) -> float:
    """Per-sentence diagnostic BLEU; zero match counts are replaced by 1e-9."""
    return bleu_from_stats([bleu_stats(hyp, refs)], smooth=SMOOTH_EPS)


def self_bleu(inputs, outputs) -> float:
    return bleu(outputs, [[x] for x in inputs])


# -- SARI ------------------------------------------------------------------------

def _f1(p, r):
    return 2 * p * r / (p + r) if p > 0 or r > 0 else 0.0


def _sari_order(src: Counter, hyp: Counter, refs_all: Counter, n_refs: int):
    src_rep = Counter({g: c * n_refs for g, c in src.items()})
    hyp_rep = Counter({g: c * n_refs for g, c in hyp.items()})

    kept = src_rep & hyp_rep
    kept_good = kept & refs_all
    kept_all = src_rep & refs_all
    keep_p = np.mean([kept_good[g] / kept[g] for g in kept]) if kept else 0.0
    keep_r = np.mean([kept_good[g] / kept_all[g] for g in kept_all]) if kept_all else 0.0

    deleted = src_rep - hyp_rep
    deleted_good = deleted - refs_all
    del_p = np.mean([deleted_good[g] / deleted[g] for g in deleted]) if deleted else 0.0

    added = set(hyp) - set(src)
    added_good = added & set(refs_all)
    addable = set(refs_all) - set(src)
    add_p = len(added_good) / len(added) if added else 0.0
    add_r = len(added_good) / len(addable) if addable else 0.0
    return _f1(keep_p, keep_r), float(del_p), _f1(add_p, add_r)


def sari_components(source, hypothesis, references) -> tuple[float, float, float]:
    """(keep F1, deletion precision, addition F1), each averaged over orders 1-4."""
    src = _toks(source.lower()) if isinstance(source, str) else _toks(source)
    hyp = _toks(hypothesis.lower()) if isinstance(hypothesis, str) else _toks(hypothesis)
    refs = [_toks(r.lower()) if isinstance(r, str) else _toks(r) for r in references]
    if not refs:
        raise ValueError("SARI needs at least one reference")
    per_order = []
    for n in range(1, MAX_ORDER + 1):
        refs_all: Counter = Counter()
        for r in refs:
            refs_all.update(ngrams(r, n))
        per_order.append(_sari_order(ngrams(src, n), ngrams(hyp, n), refs_all, len(refs)))
    keep, dele, add = np.mean(per_order, axis=0)
    return float(keep), float(dele), float(add)


def sentence_sari(source, hypothesis, references) -> float:
    return float(np.mean(sari_components(source, hypothesis, references)))


def sari(sources, hypotheses, reference_sets) -> float:
    """Corpus SARI in [0, 1]: the mean of sentence-level scores."""
    if not (len(sources) == len(hypotheses) == len(reference_sets)):
        raise ValueError(f"misaligned SARI inputs: {len(sources)} sources, {len(hypotheses)} hypotheses, "
                         f"{len(reference_sets)} reference sets")
    if not sources:
        raise ValueError("SARI of an empty set")
    return float(np.mean([sentence_sari(s, h, r) for s, h, r in zip(sources, hypotheses, reference_sets)]))


# -- reports ---------------------------------------------------------------------

@dataclass
class EvalReport:
    metric: str
    value: float
    per_sentence: list
    fingerprint: dict = field(default_factory=dict)
    level: str = "corpus"

    def as_dict(self) -> dict:
        d = asdict(self)
        d["per_sentence"] = [_plain(x) for x in self.per_sentence]
        return d


def _plain(x):
    """JSON-friendly copy of a per-sentence entry."""
    if hasattr(x, "_asdict"):
        return {k: _plain(v) for k, v in x._asdict().items()}
    if isinstance(x, tuple):
        return [_plain(v) for v in x]
    return x


def bleu_report(hypotheses, reference_sets, fingerprint=None) -> EvalReport:
    """Per-sentence entries are sufficient statistics; summing them reproduces the corpus value."""
    stats = [bleu_stats(h, r) for h, r in zip(hypotheses, reference_sets)]
    return EvalReport("bleu", bleu(hypotheses, reference_sets), stats, fingerprint or {})


def sari_report(sources, hypotheses, reference_sets, fingerprint=None) -> EvalReport:
    per = [sentence_sari(s, h, r) for s, h, r in zip(sources, hypotheses, reference_sets)]
    return EvalReport("sari", sari(sources, hypotheses, reference_sets), per, fingerprint or {})


# -- transfer accuracy -----------------------------------------------------------

class TextJudge:
    """Held-out style judge: its own frozen autoencoder plus a latent classifier."""

    def __init__(self, autoencoder=None, classifier=None, heldout_accuracy: float | None = None):
        self.autoencoder = autoencoder
        self.classifier = classifier
        self.heldout_accuracy = heldout_accuracy

    @property
    def trained(self) -> bool:
        return self.autoencoder is not None and self.classifier is not None

    def predict(self, texts) -> np.ndarray:
        if not self.trained:
            raise RuntimeError("the judge has not been trained")
        return self.classifier.predict(self.autoencoder.encode_texts(list(texts)))


def transfer_accuracy(outputs, target_label: int, judge) -> float:
    if not getattr(judge, "trained", True):
        raise RuntimeError("the judge has not been trained")
    if len(outputs) == 0:
        raise ValueError("transfer accuracy of an empty output set")
    return float(np.mean(np.asarray(judge.predict(outputs)) == target_label))


# -- sweeps ----------------------------------------------------------------------

@dataclass
class TradeoffPoint:
    sweep_param: str
    value: float
    accuracy: float = float("nan")
    self_bleu: float = float("nan")
    bleu: float = float("nan")
    sari: float = float("nan")
    seconds: float = float("nan")
    checkpoint_hash: str = ""

    @property
    def failed(self) -> bool:
        return self.checkpoint_hash == "failed"


def write_sweep_csv(path, points: Sequence[TradeoffPoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        w.writeheader()
        for p in points:
            w.writerow(asdict(p))


def read_sweep_csv(path) -> list[TradeoffPoint]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [TradeoffPoint(r["sweep_param"], float(r["value"]),
                          *(float(r[k]) for k in SWEEP_FIELDS[2:7]), r["checkpoint_hash"]) for r in rows]


def tradeoff_sweep(run_point: Callable[[float], dict], grid, sweep_param: str, csv_path=None,
                   clock=time.perf_counter) -> list[TradeoffPoint]:
    """Evaluate ``run_point(value)`` for every grid value.

    ``run_point`` returns any of accuracy / self_bleu / bleu / sari /
    checkpoint_hash.  A point that raises is recorded with NaN metrics and
    ``checkpoint_hash="failed"``; the sweep carries on.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("sweep grid is empty")
    points = []
    for value in grid:
        start = clock()
        try:
            res = run_point(value)
            point = TradeoffPoint(sweep_param, float(value), **{k: res[k] for k in SWEEP_FIELDS[2:6] if k in res},
                                  checkpoint_hash=res.get("checkpoint_hash", ""))
        except Exception as exc:  # noqa: BLE001 - a failed point must not abort the sweep
            log.warning("sweep point %s=%s failed: %s", sweep_param, value, exc)
            point = TradeoffPoint(sweep_param, float(value), checkpoint_hash="failed")
        point.seconds = clock() - start
        points.append(point)
    if csv_path is not None:
        write_sweep_csv(csv_path, points)
    return points


def selection_score(points: Sequence[TradeoffPoint]) -> float:
    """Sum of (BLEU + accuracy) over a tradeoff curve; BLEU is self-BLEU when no reference BLEU exists."""
    total = 0.0
    for p in points:
        b = p.bleu if not math.isnan(p.bleu) else p.self_bleu
        total += b + p.accuracy
    return total


def select_lambda_adv(curves: dict) -> tuple[float, dict]:
    """Pick the lambda_adv whose tradeoff curve has the highest selection score.

    ``curves`` maps lambda_adv to a list of points (or of ``(bleu, accuracy)`` pairs).
    Failed curves score NaN and are never selected.
    """
    scores = {}
    for lam, pts in curves.items():
        pts = [p if isinstance(p, TradeoffPoint) else TradeoffPoint("lambda_sty", i, accuracy=p[1], bleu=p[0])
               for i, p in enumerate(pts)]
        scores[lam] = selection_score(pts)
    valid = {k: v for k, v in scores.items() if not math.isnan(v)}
    if not valid:
        raise ValueError("no lambda_adv has a complete tradeoff curve")
    return max(valid, key=valid.get), scores


def count_inversions(values, increasing: bool = True) -> int:
    """Number of adjacent pairs that break (weak) monotonicity."""
    v = list(values)
    if increasing:
        return sum(1 for a, b in zip(v, v[1:]) if b < a)
    return sum(1 for a, b in zip(v, v[1:]) if b > a)
