"""Binary classification metrics: accuracy, micro/macro F1 and the confusion matrix.

Counts are combined with exact rational arithmetic and converted to float
once, so identities such as micro-F1 == accuracy hold bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .corpus import Label

CLASSES = (Label.NEGATIVE, Label.POSITIVE)


class MetricError(ValueError):
    pass


class LengthMismatch(MetricError):
    pass


class EmptyInput(MetricError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[gold][pred]`` with rows/columns ordered (negative, positive)."""

    counts: tuple[tuple[int, int], tuple[int, int]]

    def __getitem__(self, key: tuple[Label, Label]) -> int:
        gold, pred = key
        return self.counts[Label.parse(gold).index][Label.parse(pred).index]

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts))

    @property
    def correct(self) -> int:
        return self.counts[0][0] + self.counts[1][1]

    def class_counts(self, label: Label) -> tuple[int, int, int]:
        """(tp, fp, fn) treating ``label`` as the positive class."""
        i = Label.parse(label).index
        j = 1 - i
        return self.counts[i][i], self.counts[j][i], self.counts[i][j]

    def to_dict(self) -> dict:
        return {
            "labels": [c.value for c in CLASSES],
            "counts": [list(row) for row in self.counts],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConfusionMatrix":
        rows = data["counts"]
        return cls(((int(rows[0][0]), int(rows[0][1])), (int(rows[1][0]), int(rows[1][1]))))


def _check(gold: Sequence, pred: Sequence) -> tuple[list[Label], list[Label]]:
    if len(gold) != len(pred):
        raise LengthMismatch(f"gold has {len(gold)} labels, pred has {len(pred)}")
    if not gold:
        raise EmptyInput("cannot score an empty prediction set")
    return [Label.parse(g) for g in gold], [Label.parse(p) for p in pred]


def confusion_matrix(gold: Sequence, pred: Sequence) -> ConfusionMatrix:
    gold, pred = _check(gold, pred)
    counts = [[0, 0], [0, 0]]
    for g, p in zip(gold, pred):
        counts[g.index][p.index] += 1
    return ConfusionMatrix((tuple(counts[0]), tuple(counts[1])))


def _ratio(num: int, den: int) -> Fraction:
    # empty denominator scores 0
    return Fraction(num, den) if den else Fraction(0)


def _f1(tp: int, fp: int, fn: int) -> Fraction:
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    if precision + recall == 0:
        return Fraction(0)
    return 2 * precision * recall / (precision + recall)


def accuracy_from(cm: ConfusionMatrix) -> float:
    return float(Fraction(cm.correct, cm.total))


def f1_micro_from(cm: ConfusionMatrix) -> float:
    pooled = [cm.class_counts(c) for c in CLASSES]
    tp, fp, fn = (sum(col) for col in zip(*pooled))
    return float(_f1(tp, fp, fn))


def per_class_f1_from(cm: ConfusionMatrix) -> dict[Label, float]:
    return {c: float(_f1(*cm.class_counts(c))) for c in CLASSES}


def f1_macro_from(cm: ConfusionMatrix) -> float:
    scores = [_f1(*cm.class_counts(c)) for c in CLASSES]
    return float(sum(scores) / len(scores))


def accuracy(gold: Sequence, pred: Sequence) -> float:
    """Fraction of instances whose prediction matches the gold label."""
    return accuracy_from(confusion_matrix(gold, pred))


def f1_micro(gold: Sequence, pred: Sequence) -> float:
    """F1 from true/false positives and false negatives pooled over both classes."""
    return f1_micro_from(confusion_matrix(gold, pred))


def f1_macro(gold: Sequence, pred: Sequence) -> float:
    """Unweighted mean of the per-class F1 scores.

    A class with no gold and no predicted instances scores 0.
    """
    return f1_macro_from(confusion_matrix(gold, pred))


def per_class_f1(gold: Sequence, pred: Sequence) -> dict[Label, float]:
    return per_class_f1_from(confusion_matrix(gold, pred))
