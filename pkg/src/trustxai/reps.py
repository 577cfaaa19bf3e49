"""Mutual-information ranking of factors and selection of representatives."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_BINS = 64


@dataclass(frozen=True, eq=False)
class BinnedVariable:
    edges: np.ndarray
    counts: np.ndarray
    assignments: np.ndarray


def bin_values(values, bins: int = DEFAULT_BINS) -> BinnedVariable:
    """Equal-width binning over [min, max]; the max lands in the last bin."""
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot bin an empty vector")
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        edges = np.linspace(lo - 0.5, hi + 0.5, bins + 1)
    else:
        edges = np.linspace(lo, hi, bins + 1)
    idx = np.floor((x - edges[0]) / (edges[-1] - edges[0]) * bins).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    return BinnedVariable(edges, np.bincount(idx, minlength=bins), idx)


def _entropy_from_counts(counts: np.ndarray) -> float:
    counts = counts[counts > 0].astype(np.float64)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log2(p)))


def entropy(labels) -> float:
    """Shannon entropy in bits of a discrete label vector."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("entropy of an empty label vector")
    _, counts = np.unique(labels, return_counts=True)
    return max(_entropy_from_counts(counts), 0.0)


def joint_table(labels, assignments, n_bins: int) -> np.ndarray:
    cls, y = np.unique(np.asarray(labels), return_inverse=True)
    table = np.zeros((len(cls), n_bins))
    np.add.at(table, (y.ravel(), np.asarray(assignments)), 1.0)
    return table


def mutual_information(labels, factor, bins: int = DEFAULT_BINS) -> float:
    """MI(y; binned factor) = H(y) - H(y | factor), in bits."""
    labels = np.asarray(labels)
    factor = np.asarray(factor, dtype=np.float64)
    if labels.shape != factor.shape:
        raise ValueError("labels and factor differ in length")
    b = bin_values(factor, bins)
    table = joint_table(labels, b.assignments, bins)
    n = table.sum()
    p_joint = table / n
    p_bin = p_joint.sum(axis=0)
    nz = p_joint > 0
    ratio = p_joint[nz] / np.broadcast_to(p_bin, p_joint.shape)[nz]
    h_cond = float(-np.sum(p_joint[nz] * np.log2(ratio)))
    h_y = _entropy_from_counts(table.sum(axis=1))
    return float(min(max(h_y - h_cond, 0.0), h_y))


@dataclass(frozen=True, eq=False)
class RepresentativeSet:
    indices: np.ndarray
    raw_weights: np.ndarray
    normalized_weights: np.ndarray
    ranking: tuple[tuple[int, float], ...] = ()

    @property
    def k(self) -> int:
        return len(self.indices)


def normalize_weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    total = w.sum()
    if total <= 0:
        # every selected factor is uninformative; fall back to equal weights
        return np.full(len(w), 1.0 / len(w))
    return w / total


def rank_factors(factor_columns: np.ndarray, labels, bins: int = DEFAULT_BINS) -> list[tuple[int, float]]:
    """(factor index, MI) pairs, MI descending, lower index first on ties."""
    w = [mutual_information(labels, factor_columns[:, i], bins)
         for i in range(factor_columns.shape[1])]
    return sorted(enumerate(w), key=lambda t: (-t[1], t[0]))


def pick_representatives(scores: Sequence, labels, k: int,
                         bins: int = DEFAULT_BINS) -> RepresentativeSet:
    """Pick the k factors carrying the most information about the labels.

    ``scores`` holds one N_c x K score matrix per class (or FactorScores),
    stacked in class order; ``labels`` must follow the same row order.
    """
    mats = [np.asarray(getattr(s, "values", s), dtype=np.float64) for s in scores]
    stacked = np.vstack(mats)
    labels = np.asarray(labels)
    if len(labels) != stacked.shape[0]:
        raise ValueError(f"{len(labels)} labels for {stacked.shape[0]} score rows")
    n_factors = stacked.shape[1]
    if not 1 <= k <= n_factors:
        raise ValueError(f"k must lie in 1..{n_factors}, got {k}")
    ranking = rank_factors(stacked, labels, bins)
    top = ranking[:k]
    idx = np.array([i for i, _ in top], dtype=np.int64)
    raw = np.array([w for _, w in top], dtype=np.float64)
    return RepresentativeSet(idx, raw, normalize_weights(raw), tuple(ranking))
