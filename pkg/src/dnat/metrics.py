"""Evaluation metrics: per-order BLEU, Distinct-n, ROUGE-1/2/L, token F1, exact match.

All functions take token lists (single reference per hypothesis) and return a
value in [0, 1]. BLEU is corpus-level and reported per order, without the
cumulative geometric mean and without smoothing.
"""

from __future__ import annotations

import math
from collections import Counter

TokenList = list[str]


def _ngrams(tokens: TokenList, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _check_corpus(hyps: list[TokenList], refs: list[TokenList]) -> None:
    if not hyps:
        raise ValueError("empty corpus")
    if len(hyps) != len(refs):
        raise ValueError("hypothesis/reference count mismatch")


def bleu_n(hyps: list[TokenList], refs: list[TokenList], n: int) -> float:
    """Corpus-level modified n-gram precision with brevity penalty."""
    _check_corpus(hyps, refs)
    if n < 1:
        raise ValueError("n must be >= 1")
    clipped = total = 0
    hyp_len = ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp_len += len(hyp)
        ref_len += len(ref)
        hg = _ngrams(hyp, n)
        rg = _ngrams(ref, n)
        clipped += sum(min(c, rg[g]) for g, c in hg.items())
        total += sum(hg.values())
    if total == 0:
        return 0.0
    precision = clipped / total
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / max(hyp_len, 1))
    return bp * precision


def distinct_n(hyps: list[TokenList], n: int) -> float:
    """Unique n-grams across all hypotheses over total n-gram count."""
    if n < 1:
        raise ValueError("n must be >= 1")
    seen: set[tuple] = set()
    total = 0
    for hyp in hyps:
        grams = _ngrams(hyp, n)
        seen.update(grams)
        total += sum(grams.values())
    return len(seen) / total if total else 0.0


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def rouge_n(hyps: list[TokenList], refs: list[TokenList], n: int) -> float:
    """Clipped n-gram overlap F1, averaged over pairs."""
    _check_corpus(hyps, refs)
    scores = []
    for hyp, ref in zip(hyps, refs):
        hg = _ngrams(hyp, n)
        rg = _ngrams(ref, n)
        overlap = sum(min(c, rg[g]) for g, c in hg.items())
        hyp_total = sum(hg.values())
        ref_total = sum(rg.values())
        if hyp_total == 0 or ref_total == 0:
            scores.append(1.0 if hyp_total == ref_total else 0.0)
            continue
        scores.append(_f1(overlap / hyp_total, overlap / ref_total))
    return sum(scores) / len(scores)


def _lcs_len(a: TokenList, b: TokenList) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(hyps: list[TokenList], refs: list[TokenList]) -> float:
    """Longest-common-subsequence F1 (equal precision/recall weight), averaged."""
    _check_corpus(hyps, refs)
    scores = []
    for hyp, ref in zip(hyps, refs):
        if not hyp or not ref:
            scores.append(1.0 if len(hyp) == len(ref) else 0.0)
            continue
        lcs = _lcs_len(hyp, ref)
        scores.append(_f1(lcs / len(hyp), lcs / len(ref)))
    return sum(scores) / len(scores)


def token_f1(hyps: list[TokenList], refs: list[TokenList]) -> float:
    """Bag-of-tokens F1, averaged over pairs; an empty-vs-empty pair scores 1."""
    _check_corpus(hyps, refs)
    scores = []
    for hyp, ref in zip(hyps, refs):
        if not hyp and not ref:
            scores.append(1.0)
            continue
        overlap = sum((Counter(hyp) & Counter(ref)).values())
        if overlap == 0:
            scores.append(0.0)
            continue
        scores.append(_f1(overlap / len(hyp), overlap / len(ref)))
    return sum(scores) / len(scores)


def exact_match(hyps: list[TokenList], refs: list[TokenList]) -> float:
    _check_corpus(hyps, refs)
    return sum(h == r for h, r in zip(hyps, refs)) / len(hyps)


METRICS = {
    "bleu1": lambda h, r: bleu_n(h, r, 1),
    "bleu2": lambda h, r: bleu_n(h, r, 2),
    "bleu3": lambda h, r: bleu_n(h, r, 3),
    "bleu4": lambda h, r: bleu_n(h, r, 4),
    "distinct1": lambda h, r: distinct_n(h, 1),
    "distinct2": lambda h, r: distinct_n(h, 2),
    "rouge1": lambda h, r: rouge_n(h, r, 1),
    "rouge2": lambda h, r: rouge_n(h, r, 2),
    "rougeL": rouge_l,
    "f1": token_f1,
    "em": exact_match,
}


def evaluate(hyps: list[TokenList], refs: list[TokenList], names: list[str]) -> dict[str, float]:
    report = {}
    for name in names:
        if name not in METRICS:
            raise ValueError(f"unknown metric: {name!r}")
        report[name] = METRICS[name](hyps, refs)
    return report
