"""Entity-level evaluation with exact span-and-type matching.

A predicted span counts as correct only when both its boundaries and its type
equal a gold span. Precision, recall and F1 are micro-averaged over all
sentences and reported in percent; 0/0 ratios are 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import EntitySpan, decode_spans


@dataclass
class TypeCounts:
    gold: int = 0
    pred: int = 0
    correct: int = 0


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    token_accuracy: float
    n_gold: int
    n_pred: int
    n_correct: int
    per_type: dict[str, tuple[float, float, float]] = field(default_factory=dict)

    def formatted(self) -> str:
        return (f"P={self.precision:.2f} R={self.recall:.2f} F1={self.f1:.2f} "
                f"(gold={self.n_gold} pred={self.n_pred} correct={self.n_correct} "
                f"acc={self.token_accuracy:.2f})")


def _prf(correct: int, pred: int, gold: int) -> tuple[float, float, float]:
    p = 100.0 * correct / pred if pred else 0.0
    r = 100.0 * correct / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def score_spans(gold: list[list[EntitySpan]], pred: list[list[EntitySpan]],
                token_matches: int = 0, token_total: int = 0) -> EvalReport:
    """Micro P/R/F1 over per-sentence span lists."""
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    counts: dict[str, TypeCounts] = {}
    total = TypeCounts()
    for g_spans, p_spans in zip(gold, pred):
        gset = set(g_spans)
        for sp in g_spans:
            counts.setdefault(sp.etype, TypeCounts()).gold += 1
            total.gold += 1
        for sp in p_spans:
            tc = counts.setdefault(sp.etype, TypeCounts())
            tc.pred += 1
            total.pred += 1
            if sp in gset:
                tc.correct += 1
                total.correct += 1
    p, r, f = _prf(total.correct, total.pred, total.gold)
    acc = 100.0 * token_matches / token_total if token_total else 0.0
    per_type = {t: _prf(c.correct, c.pred, c.gold) for t, c in sorted(counts.items())}
    return EvalReport(p, r, f, acc, total.gold, total.pred, total.correct, per_type)


def score_sequences(gold_labels: list[list[str]],
                    pred_labels: list[list[str]]) -> EvalReport:
    """Score BIOES label sequences by decoding both sides into spans."""
    if len(gold_labels) != len(pred_labels):
        raise ValueError(f"{len(gold_labels)} gold sentences vs {len(pred_labels)} predicted")
    matches = 0
    total = 0
    gold_spans = []
    pred_spans = []
    for g, p in zip(gold_labels, pred_labels):
        if len(g) != len(p):
            raise ValueError(f"length mismatch: {len(g)} gold vs {len(p)} predicted labels")
        matches += sum(1 for x, y in zip(g, p) if x == y)
        total += len(g)
        gold_spans.append(decode_spans(g))
        pred_spans.append(decode_spans(p))
    return score_spans(gold_spans, pred_spans, matches, total)
