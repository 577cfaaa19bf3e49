"""Choosing the number of mixture modes per class by grid search on MCC.

A candidate is a tuple of mode counts, one per class. It is scored by
fitting each class's values with its count, labeling every value of the
stacked representative by the class whose density is largest, and taking
the MCC of those labels against the class each value came from.

Fits depend only on (class, mode count) and the seed, so they are cached
per search; the candidate counters record lattice points scored.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .metrics import ConfusionMatrix, mcc
from .mmg import InsufficientDataError, em_fit, log_pdf

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchZone:
    lo: tuple[int, ...]
    hi: tuple[int, ...]
    subzone_edge: int = 5

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or not self.lo:
            raise ValueError("zone bounds need one entry per class")
        if any(a < 1 or a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"invalid zone bounds lo={self.lo} hi={self.hi}")
        if self.subzone_edge < 1:
            raise ValueError("sub-zone edge must be positive")

    @classmethod
    def square(cls, n_classes: int, hi: int = 20, lo: int = 1, subzone_edge: int = 5) -> "SearchZone":
        return cls((lo,) * n_classes, (hi,) * n_classes, subzone_edge)

    @property
    def n_classes(self) -> int:
        return len(self.lo)

    def points(self):
        """Lattice points in lexicographic order."""
        return itertools.product(*(range(a, b + 1) for a, b in zip(self.lo, self.hi)))

    @property
    def size(self) -> int:
        return int(np.prod([b - a + 1 for a, b in zip(self.lo, self.hi)]))

    def subzones(self) -> list["SearchZone"]:
        axes = []
        for a, b in zip(self.lo, self.hi):
            axes.append([(s, min(s + self.subzone_edge - 1, b))
                         for s in range(a, b + 1, self.subzone_edge)])
        return [SearchZone(tuple(r[0] for r in combo), tuple(r[1] for r in combo), self.subzone_edge)
                for combo in itertools.product(*axes)]

    def center(self) -> tuple[int, ...]:
        return tuple((a + b) // 2 for a, b in zip(self.lo, self.hi))

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "subzone_edge": self.subzone_edge}


@dataclass(frozen=True)
class ModeAssignment:
    modes: tuple[int, ...]
    score: float
    evaluations: int = 0
    center_evaluations: int = 0
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"modes": list(self.modes), "score": self.score, "evaluations": self.evaluations,
                "center_evaluations": self.center_evaluations, "flags": list(self.flags)}


@dataclass
class _Scorer:
    """Caches per-(class, modes) log-densities of the stacked values."""
    values: Sequence[np.ndarray]
    seed: int = 0
    rep_index: int = 0
    evaluations: int = 0
    _cache: dict = field(default_factory=dict)
    _scores: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = [np.asarray(v, dtype=np.float64).reshape(-1) for v in self.values]
        self.stacked = np.concatenate(self.values)
        self.truth = np.concatenate([np.full(len(v), c + 1) for c, v in enumerate(self.values)])

    def _logdens(self, c: int, m: int):
        key = (c, m)
        if key not in self._cache:
            try:
                d = em_fit(self.values[c], m, seed=self.seed, rep_index=self.rep_index,
                           class_index=c + 1)
                self._cache[key] = log_pdf(d, self.stacked)
            except InsufficientDataError:
                self._cache[key] = None
        return self._cache[key]

    def score(self, candidate: tuple[int, ...]) -> float:
        self.evaluations += 1
        if candidate in self._scores:
            return self._scores[candidate]
        cols = [self._logdens(c, m) for c, m in enumerate(candidate)]
        if any(col is None for col in cols):
            s = -1.0
        else:
            assigned = np.argmax(np.column_stack(cols), axis=1) + 1
            cm = ConfusionMatrix.from_labels(self.truth, assigned, n_classes=len(candidate))
            s = mcc(cm)
        self._scores[candidate] = s
        return s


def _better(score: float, cand: tuple[int, ...], best_score: float, best: tuple[int, ...] | None) -> bool:
    if best is None or score > best_score:
        return True
    if score < best_score:
        return False
    # tie: fewer total modes, then lexicographic
    return (sum(cand), cand) < (sum(best), best)


def score_assignment(values: Sequence, candidate: Sequence[int], seed: int = 0) -> float:
    """MCC of density-argmax labeling for one candidate; -1 if a class has too few values."""
    return _Scorer(values, seed).score(tuple(int(m) for m in candidate))


def _check(values: Sequence, zone: SearchZone):
    if len(values) != zone.n_classes:
        raise ValueError(f"zone has {zone.n_classes} axes but {len(values)} classes were given")
    if zone.size == 0:
        raise ValueError("empty search zone")


def _grid(scorer: _Scorer, zone: SearchZone) -> tuple[tuple[int, ...], float]:
    best, best_score = None, -np.inf
    for cand in zone.points():
        s = scorer.score(cand)
        if _better(s, cand, best_score, best):
            best, best_score = cand, s
    return best, best_score


def _flags(scorer: _Scorer) -> tuple[str, ...]:
    return ("insufficient_data",) if any(v is None for v in scorer._cache.values()) else ()


def grid_mode_select(values: Sequence, zone: SearchZone, seed: int = 0,
                     rep_index: int = 0) -> ModeAssignment:
    """Score every lattice point of the zone and return the best."""
    _check(values, zone)
    scorer = _Scorer(values, seed, rep_index)
    best, score = _grid(scorer, zone)
    return ModeAssignment(best, float(score), scorer.evaluations, 0, _flags(scorer))


def fast_grid_select(values: Sequence, zone: SearchZone, seed: int = 0,
                     rep_index: int = 0) -> ModeAssignment:
    """Score sub-zone centers, then search the winning sub-zone exhaustively."""
    _check(values, zone)
    scorer = _Scorer(values, seed, rep_index)
    subs = zone.subzones()
    if len(subs) == 1:
        best, score = _grid(scorer, zone)
        return ModeAssignment(best, float(score), scorer.evaluations, 0, _flags(scorer))
    best_sub, best_center, best_score = None, None, -np.inf
    for sub in subs:
        center = sub.center()
        s = scorer.score(center)
        if _better(s, center, best_score, best_center):
            best_sub, best_center, best_score = sub, center, s
    n_centers = scorer.evaluations
    best, score = _grid(scorer, best_sub)
    log.debug("rep %d: best sub-zone %s..%s -> %s (%.4f)", rep_index, best_sub.lo, best_sub.hi, best, score)
    return ModeAssignment(best, float(score), scorer.evaluations, n_centers, _flags(scorer))
