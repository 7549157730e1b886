"""Greedy span decoding, exact-match scoring, and threshold sweeps.

Decoding keeps, per position, the argmax class and its probability as the
confidence; positions predicting non-entity or falling under the threshold
are dropped; the rest become spans via rounded offsets and survive a greedy
non-overlap pass in confidence order.  Raising the threshold can only ever
shrink the surviving set, so precision/recall trade off monotonically.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from spandet.data import EntitySpan
from spandet.heads import Candidate


def _round_half_up(x: float) -> int:
    # offsets are nonnegative, so half-away-from-zero is floor(x + 0.5)
    return math.floor(x + 0.5)


def decode(candidates: list[Candidate], n: int, threshold: float) -> list[EntitySpan]:
    """Turn per-position candidates into non-overlapping spans.

    Requires one candidate per position and a threshold in [0, 1].  Returns
    spans sorted by start.  Ties in confidence resolve to the smaller
    position, then the smaller type id.
    """
    if len(candidates) != n:
        raise ValueError(f"expected {n} candidates, got {len(candidates)}")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    proposals = []
    for c in candidates:
        slot = c.best_slot
        non_entity = len(c.class_probs) - 1
        if slot == non_entity or c.confidence < threshold:
            continue
        start = max(0, c.position - _round_half_up(c.left))
        end = min(n - 1, c.position + _round_half_up(c.right))
        proposals.append((-c.confidence, c.position, slot + 1, start, end))
    proposals.sort()
    kept: list[EntitySpan] = []
    occupied = np.zeros(n, dtype=bool)
    for neg_conf, _, type_id, start, end in proposals:
        if occupied[start:end + 1].any():
            continue
        occupied[start:end + 1] = True
        kept.append(EntitySpan(start, end, type_id, -neg_conf))
    kept.sort(key=lambda s: s.start)
    return kept


# ----- scoring -----------------------------------------------------------------


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class PRF:
    """Corpus-level exact-match counts with derived rates."""
    tp: int = 0
    n_pred: int = 0
    n_gold: int = 0

    def add(self, other: "PRF") -> None:
        self.tp += other.tp
        self.n_pred += other.n_pred
        self.n_gold += other.n_gold

    @property
    def precision_defined(self) -> bool:
        # zero predictions against nonzero gold has no real precision; it is
        # reported as 0.0 so sweep tables stay total
        return self.n_pred > 0 or self.n_gold == 0

    @property
    def precision(self) -> float:
        if self.n_pred == 0:
            return 1.0 if self.n_gold == 0 else 0.0
        return self.tp / self.n_pred

    @property
    def recall(self) -> float:
        if self.n_gold == 0:
            return 1.0 if self.n_pred == 0 else 0.0
        return self.tp / self.n_gold

    @property
    def f1(self) -> float:
        return f1_score(self.precision, self.recall)


def match_counts(predicted: list[EntitySpan], gold: list[EntitySpan]) -> PRF:
    """Exact (start, end, type) matches for one sentence."""
    gold_keys = {(g.start, g.end, g.type_id) for g in gold}
    tp = sum((p.start, p.end, p.type_id) in gold_keys for p in predicted)
    return PRF(tp, len(predicted), len(gold))


def span_prf(predicted: list[EntitySpan],
             gold: list[EntitySpan]) -> tuple[float, float, float]:
    c = match_counts(predicted, gold)
    return c.precision, c.recall, c.f1


def corpus_prf(pred_per_sentence, gold_per_sentence) -> PRF:
    total = PRF()
    for pred, gold in zip(pred_per_sentence, gold_per_sentence):
        total.add(match_counts(pred, gold))
    return total


# ----- threshold sweeps -----------------------------------------------------------


@dataclass
class SweepRow:
    threshold: float
    prf: PRF


def threshold_sweep(candidates_per_sentence, lengths, gold_per_sentence,
                    thresholds) -> list[SweepRow]:
    """Score a fixed set of model outputs at several thresholds.

    ``thresholds`` must be sorted ascending; the model is not re-run, only
    the decoder.
    """
    thresholds = list(thresholds)
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly ascending")
    rows = []
    for t in thresholds:
        preds = [decode(cands, n, t)
                 for cands, n in zip(candidates_per_sentence, lengths)]
        rows.append(SweepRow(t, corpus_prf(preds, gold_per_sentence)))
    return rows


def sweep_table(rows: list[SweepRow]) -> str:
    """Aligned text table with 2-decimal percentages."""
    lines = [f"{'threshold':>9}  {'precision':>9}  {'recall':>9}  {'f1':>9}"]
    for r in rows:
        lines.append(f"{r.threshold:>9.2f}  {100 * r.prf.precision:>9.2f}"
                     f"  {100 * r.prf.recall:>9.2f}  {100 * r.prf.f1:>9.2f}")
    return "\n".join(lines)


def write_sweep_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("threshold,precision,recall,f1\n")
        for r in rows:
            fh.write(f"{r.threshold:.2f},{100 * r.prf.precision:.2f},"
                     f"{100 * r.prf.recall:.2f},{100 * r.prf.f1:.2f}\n")


def write_predictions_jsonl(path, sentences, spans_per_sentence, classes) -> None:
    """One JSON object per sentence: tokens plus predicted spans."""
    with open(path, "w", encoding="utf-8") as fh:
        for sentence, spans in zip(sentences, spans_per_sentence):
            obj = {
                "tokens": list(sentence.tokens),
                "spans": [{"start": s.start, "end": s.end,
                           "type": classes[s.type_id - 1],
                           "confidence": round(s.confidence, 6)}
                          for s in spans],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
