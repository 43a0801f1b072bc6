"""Evaluation metrics: selection P/R/F1, Rouge-1/Rouge-L, JGA/AGA,
latency distributions and preference-study summaries, plus CSV/text
report emitters."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


# --- multi-label selection P/R/F1 -------------------------------------------


@dataclass(frozen=True)
class SelectionEval:
    micro_precision: float
    micro_recall: float
    micro_f1: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    n_examples: int


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def selection_prf(examples: Sequence[tuple[set, set]]) -> SelectionEval:
    """Micro scores pool TP/FP/FN over all examples; macro averages
    per-example P/R/F1 (an example with empty gold and pred scores 1.0)."""
    if not examples:
        raise ValueError("empty example list")
    tp = fp = fn = 0
    per_p, per_r, per_f = [], [], []
    for gold, pred in examples:
        gold, pred = set(gold), set(pred)
        etp = len(gold & pred)
        efp = len(pred - gold)
        efn = len(gold - pred)
        tp, fp, fn = tp + etp, fp + efp, fn + efn
        if not gold and not pred:
            p = r = f = 1.0
        else:
            p = etp / len(pred) if pred else 0.0
            r = etp / len(gold) if gold else 0.0
            f = _f1(p, r)
        per_p.append(p)
        per_r.append(r)
        per_f.append(f)
    micro_p = tp / (tp + fp) if tp + fp else 0.0
    micro_r = tp / (tp + fn) if tp + fn else 0.0
    n = len(examples)
    return SelectionEval(
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=_f1(micro_p, micro_r),
        macro_precision=sum(per_p) / n,
        macro_recall=sum(per_r) / n,
        macro_f1=sum(per_f) / n,
        n_examples=n,
    )


# --- Rouge -------------------------------------------------------------------


@dataclass(frozen=True)
class RougeScores:
    rouge1_p: float
    rouge1_r: float
    rouge1_f: float
    rougeL_p: float
    rougeL_r: float
    rougeL_f: float


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Classic O(len(a)*len(b)) dynamic program."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge(candidate: Sequence[str] | str, reference: Sequence[str] | str) -> RougeScores:
    """Rouge-1 (clipped unigram overlap) and Rouge-L (LCS), both F at beta=1.

    String inputs are tokenized by lowercasing and splitting on
    non-alphanumeric runs. Two empty sequences score 1.0, one empty 0.0.
    """
    cand = tokenize(candidate) if isinstance(candidate, str) else list(candidate)
    ref = tokenize(reference) if isinstance(reference, str) else list(reference)
    if not cand and not ref:
        return RougeScores(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    if not cand or not ref:
        return RougeScores(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    ref_counts: dict[str, int] = {}
    for t in ref:
        ref_counts[t] = ref_counts.get(t, 0) + 1
    clipped = 0
    cand_counts: dict[str, int] = {}
    for t in cand:
        cand_counts[t] = cand_counts.get(t, 0) + 1
    for t, c in cand_counts.items():
        clipped += min(c, ref_counts.get(t, 0))
    r1_p = clipped / len(cand)
    r1_r = clipped / len(ref)

    lcs = lcs_length(cand, ref)
    rl_p = lcs / len(cand)
    rl_r = lcs / len(ref)
    return RougeScores(
        rouge1_p=r1_p, rouge1_r=r1_r, rouge1_f=_f1(r1_p, r1_r),
        rougeL_p=rl_p, rougeL_r=rl_r, rougeL_f=_f1(rl_p, rl_r),
    )


# --- JGA / AGA ----------------------------------------------------------------


@dataclass(frozen=True)
class DstEval:
    jga: float
    aga: float
    turn_count: int
    active_slot_count: int
    aga_macro: Optional[float] = None


def _canon(v: str) -> str:
    return v.strip().lower()


def dst_eval(
    predicted: Sequence[dict[str, str]],
    gold: Sequence[dict[str, str]],
    include_macro: bool = False,
) -> DstEval:
    """JGA: fraction of turns whose full predicted map matches gold exactly.

    AGA (micro): over all (turn, active slot) pairs, where a slot is
    active when gold gives it a non-empty value; a pair is correct when
    the prediction matches after trim+lowercase. The macro variant
    averages per-turn accuracy first and is off by default.
    """
    if len(predicted) != len(gold):
        raise ValueError(f"turn count mismatch: {len(predicted)} vs {len(gold)}")
    if not gold:
        raise ValueError("zero turns")
    joint = 0
    correct_pairs = 0
    active_pairs = 0
    per_turn_acc = []
    for pred_map, gold_map in zip(predicted, gold):
        pred_c = {k: _canon(v) for k, v in pred_map.items() if _canon(v)}
        gold_c = {k: _canon(v) for k, v in gold_map.items() if _canon(v)}
        if pred_c == gold_c:
            joint += 1
        active = list(gold_c)
        if active:
            turn_correct = sum(1 for k in active if pred_c.get(k) == gold_c[k])
            correct_pairs += turn_correct
            active_pairs += len(active)
            per_turn_acc.append(turn_correct / len(active))
    aga = correct_pairs / active_pairs if active_pairs else 0.0
    macro = sum(per_turn_acc) / len(per_turn_acc) if (include_macro and per_turn_acc) else None
    return DstEval(
        jga=joint / len(gold), aga=aga, turn_count=len(gold),
        active_slot_count=active_pairs, aga_macro=macro,
    )


# --- latency ------------------------------------------------------------------


@dataclass(frozen=True)
class LatencyReport:
    samples: tuple[float, ...]
    p50: float
    p90: float
    p99: float

    def fraction_under(self, threshold_ms: float) -> float:
        return sum(1 for x in self.samples if x < threshold_ms) / len(self.samples)


def _nearest_rank(sorted_samples: Sequence[float], pct: float) -> float:
    import math

    rank = max(1, math.ceil(pct / 100 * len(sorted_samples)))
    return sorted_samples[rank - 1]


def latency_report(samples: Iterable[float]) -> LatencyReport:
    data = tuple(samples)
    if not data:
        raise ValueError("empty samples")
    s = sorted(data)
    return LatencyReport(
        samples=data,
        p50=_nearest_rank(s, 50),
        p90=_nearest_rank(s, 90),
        p99=_nearest_rank(s, 99),
    )


def latency_histogram(samples: Iterable[float], bucket_ms: float = 250.0) -> list[tuple[float, int]]:
    """(bucket lower bound, count) pairs, for the histogram CSV."""
    buckets: dict[int, int] = {}
    for x in samples:
        buckets[int(x // bucket_ms)] = buckets.get(int(x // bucket_ms), 0) + 1
    return [(b * bucket_ms, buckets[b]) for b in sorted(buckets)]


# --- preference study -----------------------------------------------------------


def preference_summary(votes: Sequence[str]) -> tuple[int, int, float]:
    """Counts of 'A' and 'B' votes and the A-rate."""
    if not votes:
        raise ValueError("empty vote list")
    count_a = sum(1 for v in votes if v == "A")
    count_b = sum(1 for v in votes if v == "B")
    return count_a, count_b, count_a / len(votes)


# --- report emitters -------------------------------------------------------------


def table_csv(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(headers)
    writer.writerows(rows)
    return buf.getvalue()


def table_text(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    str_rows = [[str(c) for c in row] for row in rows]
    widths = [
        max(len(h), *(len(r[i]) for r in str_rows)) if str_rows else len(h)
        for i, h in enumerate(headers)
    ]
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(r) for r in str_rows)
    return "\n".join(lines) + "\n"


def latency_histogram_csv(samples: Iterable[float], bucket_ms: float = 250.0) -> str:
    rows = [(f"{b:g}", c) for b, c in latency_histogram(samples, bucket_ms)]
    return table_csv(["bucket_ms", "count"], rows)
