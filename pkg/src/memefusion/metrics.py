"""Confusion matrix, classification report, and the table renderer."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

import numpy as np

CLASS_NAMES = ("Non-Troll", "Troll")  # index order: 0 = non-troll, 1 = troll


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[true][pred] with class order (non-troll, troll)."""

    counts: tuple[tuple[int, int], tuple[int, int]]

    @classmethod
    def from_array(cls, arr) -> "ConfusionMatrix":
        a = np.asarray(arr)
        if a.shape != (2, 2) or (a < 0).any() or not np.all(a == np.round(a)):
            raise ValueError(f"confusion matrix must be 2x2 nonnegative integers, got {arr!r}")
        return cls(tuple(tuple(int(x) for x in row) for row in a))

    def array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.array().sum())


def confusion(preds, truths) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64).ravel()
    truths = np.asarray(truths, dtype=np.int64).ravel()
    if preds.size != truths.size:
        raise ValueError(f"length mismatch: {preds.size} predictions vs {truths.size} labels")
    if preds.size == 0:
        raise ValueError("cannot build a confusion matrix from zero samples")
    if not np.isin(preds, (0, 1)).all() or not np.isin(truths, (0, 1)).all():
        raise ValueError("labels must be 0 (non-troll) or 1 (troll)")
    counts = np.zeros((2, 2), dtype=np.int64)
    np.add.at(counts, (truths, preds), 1)
    return ConfusionMatrix.from_array(counts)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassificationReport:
    per_class: dict[str, ClassMetrics]
    accuracy: float
    macro: ClassMetrics
    weighted: ClassMetrics
    confusion: ConfusionMatrix
    undefined: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_class": {k: asdict(v) for k, v in self.per_class.items()},
            "accuracy": self.accuracy,
            "macro_avg": asdict(self.macro),
            "weighted_avg": asdict(self.weighted),
            "confusion": [list(r) for r in self.confusion.counts],
            "undefined": list(self.undefined),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassificationReport":
        return cls(
            per_class={k: ClassMetrics(**v) for k, v in d["per_class"].items()},
            accuracy=d["accuracy"],
            macro=ClassMetrics(**d["macro_avg"]),
            weighted=ClassMetrics(**d["weighted_avg"]),
            confusion=ConfusionMatrix.from_array(d["confusion"]),
            undefined=list(d.get("undefined", [])),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _ratio(num: int, den: int, what: str, undefined: list[str]) -> Fraction:
    if den == 0:
        undefined.append(what)
        return Fraction(0)
    return Fraction(num, den)


def report(cm: ConfusionMatrix) -> ClassificationReport:
    """Per-class precision/recall/F1 plus accuracy, macro and support-weighted averages.

    Arithmetic is exact (rationals) until the final float conversion, so identities
    such as weighted recall == accuracy hold bit for bit.  Any 0/0 ratio is
    reported as 0 and its name listed in ``undefined``.
    """
    a = cm.array()
    total = int(a.sum())
    if total == 0:
        raise ValueError("empty confusion matrix")
    undefined: list[str] = []
    exact = []
    for c, name in enumerate(CLASS_NAMES):
        tp = int(a[c, c])
        support = int(a[c, :].sum())
        p = _ratio(tp, int(a[:, c].sum()), f"{name} precision", undefined)
        r = _ratio(tp, support, f"{name} recall", undefined)
        if p + r == 0:
            undefined.append(f"{name} f1")
            f1 = Fraction(0)
        else:
            f1 = 2 * p * r / (p + r)
        exact.append((p, r, f1, support))

    def avg(weights):
        norm = sum(weights)
        return ClassMetrics(
            *(float(sum(w * row[i] for w, row in zip(weights, exact)) / norm) for i in range(3)), total
        )

    per_class = {
        name: ClassMetrics(float(p), float(r), float(f1), s) for name, (p, r, f1, s) in zip(CLASS_NAMES, exact)
    }
    macro = avg([1] * len(exact))
    weighted = avg([row[3] for row in exact])
    accuracy = float(Fraction(int(np.trace(a)), total))
    return ClassificationReport(per_class, accuracy, macro, weighted, cm, undefined)


def round_half_up(x: float, places: int = 2) -> str:
    quantum = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(x))).quantize(quantum, rounding=ROUND_HALF_UP))


_LABEL_W = 12
_COL_W = 10


def _row(label: str, cells) -> str:
    return (label.ljust(_LABEL_W) + "".join(c.rjust(_COL_W) for c in cells)).rstrip()


def render(rep: ClassificationReport) -> str:
    """Fixed-width table: classes, Accuracy, Macro Avg, Weighted Avg."""
    def metric_row(label, m: ClassMetrics):
        return _row(label, [round_half_up(m.precision), round_half_up(m.recall), round_half_up(m.f1), str(m.support)])

    lines = [_row("", ["Precision", "Recall", "F1-Score", "Support"])]
    for name in CLASS_NAMES:
        lines.append(metric_row(name, rep.per_class[name]))
    lines.append("")
    total = rep.macro.support
    lines.append(_row("Accuracy", ["", "", round_half_up(rep.accuracy), str(total)]))
    lines.append(metric_row("Macro Avg", rep.macro))
    lines.append(metric_row("Weighted Avg", rep.weighted))
    return "\n".join(lines) + "\n"
