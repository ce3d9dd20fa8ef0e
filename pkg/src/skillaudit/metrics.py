"""Multi-class validation of disclosure verdicts against gold labels."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import InputError
from .policy import VERDICTS, DisclosureVerdict


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


@dataclass
class ValidationReport:
    classes: tuple[str, ...]
    confusion: dict[str, dict[str, int]]  # gold -> predicted -> count
    per_class: dict[str, PRF]
    micro: PRF
    macro: PRF
    # F1 taken as the harmonic mean of macro P and macro R (the other common convention)
    macro_f1_of_means: float


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


def metrics_from_confusion(confusion: dict[str, dict[str, int]],
                           classes: Sequence[str] = VERDICTS) -> ValidationReport:
    """Micro and macro P/R/F1 from a gold x predicted count matrix.

    Macro averages run over the classes that occur in gold; a class never
    predicted gets precision 0.
    """
    tp = {c: confusion.get(c, {}).get(c, 0) for c in classes}
    gold_n = {c: sum(confusion.get(c, {}).values()) for c in classes}
    pred_n = {c: sum(confusion.get(g, {}).get(c, 0) for g in confusion) for c in classes}
    total = sum(gold_n.values())

    per_class = {}
    for c in classes:
        p = tp[c] / pred_n[c] if pred_n[c] else 0.0
        r = tp[c] / gold_n[c] if gold_n[c] else 0.0
        per_class[c] = PRF(p, r, _f1(p, r))

    correct = sum(tp.values())
    tp_fp = sum(pred_n.values())
    micro_p = correct / tp_fp if tp_fp else 0.0
    micro_r = correct / total if total else 0.0
    micro = PRF(micro_p, micro_r, _f1(micro_p, micro_r))

    present = [c for c in classes if gold_n[c]]
    if present:
        mp = sum(per_class[c].precision for c in present) / len(present)
        mr = sum(per_class[c].recall for c in present) / len(present)
        mf = sum(per_class[c].f1 for c in present) / len(present)
    else:
        mp = mr = mf = 0.0
    full = {g: {p: confusion.get(g, {}).get(p, 0) for p in classes} for g in classes}
    return ValidationReport(tuple(classes), full, per_class, micro, PRF(mp, mr, mf), _f1(mp, mr))


def validation_metrics(predicted: Sequence[DisclosureVerdict], gold: Sequence[DisclosureVerdict]) -> ValidationReport:
    """Compare predicted and gold verdicts over the same set of tuples."""
    pred = {v.tuple: v.verdict for v in predicted}
    ref = {v.tuple: v.verdict for v in gold}
    if len(pred) != len(predicted) or len(ref) != len(gold):
        raise InputError("duplicate tuples in predicted or gold verdicts")
    if pred.keys() != ref.keys():
        missing = len(ref.keys() - pred.keys())
        extra = len(pred.keys() - ref.keys())
        raise InputError(f"predicted and gold tuple sets differ ({missing} missing, {extra} extra)")
    counts = Counter((ref[t], pred[t]) for t in ref)
    confusion: dict[str, dict[str, int]] = {}
    for (g, p), n in counts.items():
        confusion.setdefault(g, {})[p] = n
    return metrics_from_confusion(confusion)
