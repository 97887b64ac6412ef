"""Classification metrics, repeat-run summaries and ROUGE for itemized disputes."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from . import kernels
from .errors import EmptyInput, EmptyReference, LengthMismatch


@dataclass(frozen=True)
class RunMetrics:
    f1: float
    accuracy: float
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def confusion(self):
        return self.tp, self.fp, self.fn, self.tn

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


def f1_score(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def classification_metrics(predictions: Sequence[int], labels: Sequence[int]) -> RunMetrics:
    """Positive-class F1 and accuracy; label 1 is "similar"."""
    if len(predictions) != len(labels):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(labels)} labels")
    if not len(labels):
        raise EmptyInput("no predictions")
    tp = fp = fn = tn = 0
    for p, y in zip(predictions, labels):
        p, y = int(p), int(y)
        if p and y:
            tp += 1
        elif p:
            fp += 1
        elif y:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return RunMetrics(f1_score(precision, recall), (tp + tn) / len(labels), tp, fp, fn, tn)


@dataclass(frozen=True)
class BoxplotStats:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float
    n: int

    def to_record(self):
        return asdict(self)


def _median(xs):
    n = len(xs)
    mid = n // 2
    return xs[mid] if n % 2 else (xs[mid - 1] + xs[mid]) / 2


def boxplot_stats(values: Sequence[float]) -> BoxplotStats:
    """Five-number summary with quartiles as medians of the lower/upper halves.

    For odd n the median itself is left out of both halves.
    """
    xs = sorted(float(v) for v in values)
    n = len(xs)
    if n == 0:
        raise EmptyInput("boxplot of an empty list")
    if n == 1:
        v = xs[0]
        return BoxplotStats(v, v, v, v, v, v, 1)
    half = n // 2
    lower, upper = xs[:half], xs[half + (n % 2):]
    return BoxplotStats(xs[0], _median(lower), _median(xs), _median(upper), xs[-1],
                        sum(xs) / n, n)


# --------------------------------------------------------------------------
# segmentation

_TOKEN_RX = re.compile(r"[A-Za-z0-9]+|\S")


def char_tokens(text: str) -> list[str]:
    """Single non-ASCII characters plus contiguous ASCII alphanumeric runs."""
    return _TOKEN_RX.findall(text or "")


class SegmenterProvider(Protocol):
    def segment(self, text: str) -> list[str]: ...


class CharSegmenter:
    def segment(self, text: str) -> list[str]:
        return char_tokens(text)


class CallableSegmenter:
    """Adapt any ``text -> tokens`` function (e.g. ``jieba.lcut``)."""

    def __init__(self, fn: Callable[[str], list[str]]):
        self.fn = fn

    def segment(self, text: str) -> list[str]:
        return [t for t in self.fn(text) if t.strip()]


def tokenize_zh(text: str, segmenter: SegmenterProvider | None = None) -> list[str]:
    if not text:
        return []
    return (segmenter or CharSegmenter()).segment(text)


# --------------------------------------------------------------------------
# ROUGE

BREAK = "\x00<BRK>"


@dataclass(frozen=True)
class PRF:
    p: float
    r: float
    f1: float


def _joined(items: Sequence[str], segmenter) -> list[str]:
    seq: list[str] = []
    for i, item in enumerate(items):
        if i:
            seq.append(BREAK)
        seq.extend(tokenize_zh(item, segmenter))
    return seq


def _ngrams(seq: list[str], n: int) -> Counter:
    grams = Counter()
    for i in range(len(seq) - n + 1):
        g = tuple(seq[i:i + n])
        if BREAK not in g:
            grams[g] += 1
    return grams


def _prf(overlap: int, cand_total: int, ref_total: int) -> PRF:
    p = overlap / cand_total if cand_total else 0.0
    r = overlap / ref_total if ref_total else 0.0
    return PRF(p, r, f1_score(p, r))


def rouge_n(cand: list[str], ref: list[str], n: int) -> PRF:
    c, r = _ngrams(cand, n), _ngrams(ref, n)
    overlap = sum(min(cnt, r[g]) for g, cnt in c.items())
    return _prf(overlap, sum(c.values()), sum(r.values()))


def rouge_l(cand: list[str], ref: list[str]) -> PRF:
    vocab: dict[str, int] = {BREAK: -1}
    a = np.fromiter((vocab.setdefault(t, len(vocab)) for t in cand), dtype=np.int64, count=len(cand))
    b = np.fromiter((vocab.setdefault(t, len(vocab)) for t in ref), dtype=np.int64, count=len(ref))
    lcs = kernels.lcs_length(a, b, -1)
    return _prf(lcs, sum(t != BREAK for t in cand), sum(t != BREAK for t in ref))


def rouge_scores(candidate_items: Sequence[str], reference_items: Sequence[str],
                 segmenter: SegmenterProvider | None = None) -> dict[str, PRF]:
    """ROUGE-1/2/L of break-joined candidate items against reference items."""
    ref = _joined(reference_items, segmenter)
    if not any(t != BREAK for t in ref):
        raise EmptyReference("reference has no tokens")
    cand = _joined(candidate_items, segmenter)
    return {"r1": rouge_n(cand, ref, 1), "r2": rouge_n(cand, ref, 2), "rl": rouge_l(cand, ref)}


@dataclass
class RougeReport:
    per_doc: list[dict]
    macro: dict[str, PRF]

    def to_record(self) -> dict:
        def row(scores):
            return {k: asdict(v) for k, v in scores.items()}
        return {
            "per_doc": [{"doc_id": d["doc_id"], **row({k: d[k] for k in ("r1", "r2", "rl")})}
                        for d in self.per_doc],
            "macro": row(self.macro),
            "table": {
                "macro precision": {k.upper().replace("R", "R-", 1): v.p for k, v in self.macro.items()},
                "macro recall": {k.upper().replace("R", "R-", 1): v.r for k, v in self.macro.items()},
                "macro F1": {k.upper().replace("R", "R-", 1): v.f1 for k, v in self.macro.items()},
            },
        }


def macro_rouge(per_doc: Sequence[dict]) -> dict[str, PRF]:
    """Per-document arithmetic means; macro F1 is the mean of per-document F1."""
    if not per_doc:
        raise EmptyInput("no documents")
    n = len(per_doc)
    out = {}
    for key in ("r1", "r2", "rl"):
        out[key] = PRF(sum(d[key].p for d in per_doc) / n,
                       sum(d[key].r for d in per_doc) / n,
                       sum(d[key].f1 for d in per_doc) / n)
    return out


def rouge_report(candidates: dict[str, Sequence[str]], references: dict[str, Sequence[str]],
                 segmenter: SegmenterProvider | None = None) -> RougeReport:
    """Score every document present in both maps (sorted by id)."""
    per_doc = []
    for doc_id in sorted(set(candidates) & set(references)):
        per_doc.append({"doc_id": doc_id, **rouge_scores(candidates[doc_id], references[doc_id], segmenter)})
    return RougeReport(per_doc, macro_rouge(per_doc))


def write_rouge_report(path, reports: dict[str, RougeReport]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({name: r.to_record() for name, r in reports.items()}, fh, ensure_ascii=False, indent=2)
