"""Span-level micro-F1 (exact-match) and the sentence-level Perfect score.

A predicted span counts as a true positive only if its label, start, and
end all match a gold span.  Counts are pooled over the whole corpus before
computing precision/recall/F1.  Perfect is the fraction of sentences whose
entire prediction matches gold; for well-formed tag sequences this equals
span-set equality, so one report carries both.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import ContractError
from .formats import Span


@dataclass
class LabelCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class EvalReport:
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    f1: float
    perfect: float
    per_label: dict[str, LabelCounts] = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "perfect": self.perfect,
            "per_label": {
                lab: {"tp": c.tp, "fp": c.fp, "fn": c.fn}
                for lab, c in sorted(self.per_label.items())
            },
        }
        return json.dumps(doc, sort_keys=True)


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    # An entity-free corpus predicted entity-free is a perfect score, not 0/0.
    if tp == 0 and fp == 0 and fn == 0:
        return 1.0, 1.0, 1.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def micro_f1(
    gold: Mapping[str, Sequence[Span]],
    pred: Mapping[str, Sequence[Span]],
) -> EvalReport:
    """Exact-match span F1 over sentence-aligned span sets keyed by id."""
    if set(gold) != set(pred):
        raise ContractError("gold and predicted sentence ids are not aligned")
    per_label: dict[str, LabelCounts] = {}
    exact = 0
    for sid in gold:
        gold_set = set(gold[sid])
        pred_set = set(pred[sid])
        if gold_set == pred_set:
            exact += 1
        for span in pred_set:
            counts = per_label.setdefault(span.label, LabelCounts())
            if span in gold_set:
                counts.tp += 1
            else:
                counts.fp += 1
        for span in gold_set - pred_set:
            per_label.setdefault(span.label, LabelCounts()).fn += 1
    tp = sum(c.tp for c in per_label.values())
    fp = sum(c.fp for c in per_label.values())
    fn = sum(c.fn for c in per_label.values())
    precision, recall, f1 = _prf(tp, fp, fn)
    return EvalReport(
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
        precision=precision,
        recall=recall,
        f1=f1,
        perfect=exact / len(gold) if gold else 1.0,
        per_label=per_label,
    )


def render_eval_table(report: EvalReport) -> str:
    """Aligned per-label breakdown with the pooled totals last."""
    header = f"{'label':<16} {'TP':>6} {'FP':>6} {'FN':>6} {'P':>8} {'R':>8} {'F1':>8}"
    lines = [header, "-" * len(header)]
    for label, c in sorted(report.per_label.items()):
        p, r, f1 = _prf(c.tp, c.fp, c.fn)
        lines.append(
            f"{label:<16} {c.tp:>6d} {c.fp:>6d} {c.fn:>6d} {p:>8.4f} {r:>8.4f} {f1:>8.4f}"
        )
    lines.append(
        f"{'ALL':<16} {report.true_positives:>6d} {report.false_positives:>6d} "
        f"{report.false_negatives:>6d} {report.precision:>8.4f} "
        f"{report.recall:>8.4f} {report.f1:>8.4f}"
    )
    lines.append(f"Perfect: {report.perfect:.4f}")
    return "\n".join(lines)


def perfect(
    gold: Mapping[str, Sequence[str]],
    pred: Mapping[str, Sequence[str]],
) -> float:
    """Fraction of sentences whose full tag sequence matches gold exactly."""
    if set(gold) != set(pred):
        raise ContractError("gold and predicted sentence ids are not aligned")
    if not gold:
        return 1.0
    hits = 0
    for sid in gold:
        if len(gold[sid]) != len(pred[sid]):
            raise ContractError(f"sentence {sid!r}: tag sequence lengths differ")
        if tuple(gold[sid]) == tuple(pred[sid]):
            hits += 1
    return hits / len(gold)
