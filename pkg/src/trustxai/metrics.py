"""Confusion-matrix metrics: MCC, accuracy, undetected rate, fidelity."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """``counts[a, b]``: samples of reference class a+1 assigned class b+1.

    For two classes, ``positive`` names the class counted as positive
    (the attack class in IDS data, class 1 by default).
    """
    counts: np.ndarray
    positive: int = 1

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(counts < 0):
            raise ValueError("negative counts")
        if not 1 <= self.positive <= counts.shape[0]:
            raise ValueError(f"positive class {self.positive} out of range")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_labels(cls, reference, assigned, n_classes: int | None = None,
                    positive: int = 1) -> "ConfusionMatrix":
        reference = np.asarray(reference, dtype=np.int64)
        assigned = np.asarray(assigned, dtype=np.int64)
        if reference.shape != assigned.shape:
            raise ValueError("label vectors differ in length")
        if n_classes is None:
            n_classes = int(max(reference.max(initial=1), assigned.max(initial=1), 2))
        counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(counts, (reference - 1, assigned - 1), 1)
        return cls(counts, positive)

    @classmethod
    def binary(cls, tn: int, fp: int, fn: int, tp: int) -> "ConfusionMatrix":
        """Class 1 = positive (attack), class 2 = negative (normal)."""
        return cls(np.array([[tp, fn], [fp, tn]]), positive=1)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def _binary(self) -> tuple[int, int, int, int]:
        if self.n_classes != 2:
            raise ValueError("TN/FP/FN/TP are defined for two classes only")
        p = self.positive - 1
        q = 1 - p
        c = self.counts
        return int(c[q, q]), int(c[q, p]), int(c[p, q]), int(c[p, p])

    @property
    def tn(self) -> int:
        return self._binary()[0]

    @property
    def fp(self) -> int:
        return self._binary()[1]

    @property
    def fn(self) -> int:
        return self._binary()[2]

    @property
    def tp(self) -> int:
        return self._binary()[3]

    def to_dict(self) -> dict:
        d = {"counts": self.counts.tolist(), "positive": self.positive}
        if self.n_classes == 2:
            d.update(zip(("tn", "fp", "fn", "tp"), self._binary()))
        return d


def mcc(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("MCC of an empty confusion matrix")
    if cm.n_classes == 2:
        tn, fp, fn, tp = cm._binary()
        den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
        if den == 0:
            return 0.0
        return float((tp * tn - fp * fn) / math.sqrt(den))
    # multiclass generalization (Gorodkin's R_K)
    c = cm.counts.astype(np.float64)
    s = c.sum()
    correct = np.trace(c)
    t = c.sum(axis=1)
    p = c.sum(axis=0)
    num = correct * s - np.dot(t, p)
    den = math.sqrt((s * s - np.dot(p, p)) * (s * s - np.dot(t, t)))
    if den == 0:
        return 0.0
    return float(num / den)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def undetected_rate(cm: ConfusionMatrix) -> float:
    _, _, fn, tp = cm._binary()
    if fn + tp == 0:
        raise ValueError("undetected rate needs at least one positive-class sample")
    return fn / (fn + tp)


def summary(cm: ConfusionMatrix) -> dict:
    out = {"n": cm.total, "mcc": mcc(cm), "accuracy": accuracy(cm)}
    if cm.n_classes == 2:
        _, _, fn, tp = cm._binary()
        out["undetected_rate"] = undetected_rate(cm) if fn + tp else None
    out["confusion"] = cm.to_dict()
    return out


def format_table(rows: dict[str, dict]) -> str:
    """Aligned plain-text table of metric summaries keyed by row name."""
    head = ("", "N", "MCC", "Accuracy", "UR")
    lines = []
    for name, m in rows.items():
        ur = m.get("undetected_rate")
        lines.append((name, str(m["n"]), f"{m['mcc']:.4f}", f"{m['accuracy']:.4f}",
                      "-" if ur is None else f"{ur:.4f}"))
    widths = [max(len(r[i]) for r in [head, *lines]) for i in range(len(head))]
    fmt = lambda r: "  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(r, widths)))
    return "\n".join([fmt(head), *map(fmt, lines)]) + "\n"
