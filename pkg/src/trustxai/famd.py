"""Per-class factor analysis of mixed data.

Each class partition is standardized column by column, pairwise association
strengths are collected into a relation matrix, and the signed relation
matrix of the standardized columns is factorized by SVD.

Scores come in two flavours. Standardized scores are the class-centered,
class-scaled rows projected onto the loadings. Unstandardized scores, the
ones the explainer works with, shift each row back by the class location
relative to a shared reference frame (the pooled training data), so
classes that differ mainly in location stay apart in factor space. When a
partition is fitted on its own, the frame is the partition itself and the
two flavours coincide.

Qualitative columns are quantified before standardization: every category
gets the rank of its frequency in the reference frame (most frequent = 0,
ties by token). A category never seen in the frame carries no indicator
weight, i.e. it contributes a standardized value of 0 and the row is
flagged.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import Column, DataError, Dataset, FeatureKind, Schema

log = logging.getLogger(__name__)

PEARSON_SQ = "pearson_sq"
CHI_SQ = "chi_sq"
CORR_RATIO_SQ = "corr_ratio_sq"

_VAR_EPS = 1e-12


class DegenerateDataError(DataError):
    pass


def _is_constant(x: np.ndarray) -> bool:
    return x.size == 0 or np.ptp(x) == 0.0


def pearson_sq(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if _is_constant(x) or _is_constant(y):
        return 0.0
    xc = x - x.mean()
    yc = y - y.mean()
    den = np.dot(xc, xc) * np.dot(yc, yc)
    if den <= 0.0:
        return 0.0
    return float(min(np.dot(xc, yc) ** 2 / den, 1.0))


def _codes(x) -> tuple[np.ndarray, int]:
    _, inv = np.unique(np.asarray(x), return_inverse=True)
    inv = inv.ravel()
    return inv, int(inv.max()) + 1 if inv.size else 0


def cramer_v_sq(a, b) -> float:
    """Chi-square statistic scaled to [0, 1]: chi2 / (N * (min(r, c) - 1))."""
    ia, ra = _codes(a)
    ib, rb = _codes(b)
    n = ia.size
    if min(ra, rb) < 2:
        return 0.0
    table = np.zeros((ra, rb))
    np.add.at(table, (ia, ib), 1.0)
    expected = np.outer(table.sum(1), table.sum(0)) / n
    chi2 = float(((table - expected) ** 2 / expected).sum())
    return float(min(chi2 / (n * (min(ra, rb) - 1)), 1.0))


def correlation_ratio_sq(categories, values) -> float:
    """eta^2: between-group share of the total sum of squares."""
    values = np.asarray(values, dtype=np.float64)
    if _is_constant(values):
        return 0.0
    inv, g = _codes(categories)
    counts = np.bincount(inv, minlength=g)
    sums = np.bincount(inv, weights=values, minlength=g)
    mean = values.mean()
    between = float(np.sum(sums ** 2 / np.maximum(counts, 1)) - values.size * mean ** 2)
    total = float(np.sum((values - mean) ** 2))
    return float(np.clip(between / total, 0.0, 1.0))


def association(col_a, kind_a: FeatureKind, col_b, kind_b: FeatureKind) -> float:
    """Association strength between two columns, symmetric, in [0, 1]."""
    if len(col_a) != len(col_b):
        raise DataError("columns differ in length")
    if len(col_a) < 2:
        raise DataError("association needs at least two observations")
    q_a = kind_a is FeatureKind.QUANTITATIVE
    q_b = kind_b is FeatureKind.QUANTITATIVE
    if q_a and q_b:
        return pearson_sq(col_a, col_b)
    if not q_a and not q_b:
        return cramer_v_sq(col_a, col_b)
    if q_a:
        return correlation_ratio_sq(col_b, col_a)
    return correlation_ratio_sq(col_a, col_b)


@dataclass(frozen=True, eq=False)
class RelationMatrix:
    values: np.ndarray
    kinds: tuple[tuple[str, ...], ...]


def relation_matrix(part: Dataset, live=None) -> RelationMatrix:
    """Pairwise association strengths; ``live`` marks non-degenerate columns."""
    k = part.n_features
    kinds = part.schema.kinds
    cols = [part.columns[j] for j in range(k)]
    vals = np.zeros((k, k))
    tags = [[""] * k for _ in range(k)]
    for i in range(k):
        for j in range(i, k):
            if kinds[i] is FeatureKind.QUANTITATIVE and kinds[j] is FeatureKind.QUANTITATIVE:
                tag = PEARSON_SQ
            elif kinds[i] is FeatureKind.QUALITATIVE and kinds[j] is FeatureKind.QUALITATIVE:
                tag = CHI_SQ
            else:
                tag = CORR_RATIO_SQ
            if i == j:
                v = float(live[i]) if live is not None else float(not _constant_column(part, i))
            else:
                v = association(cols[i], kinds[i], cols[j], kinds[j])
            vals[i, j] = vals[j, i] = v
            tags[i][j] = tags[j][i] = tag
    return RelationMatrix(vals, tuple(tuple(r) for r in tags))


def _constant_column(part: Dataset, j: int) -> bool:
    col = part.columns[j]
    return col.size == 0 or bool(np.all(col == col[0]))


@dataclass(frozen=True, eq=False)
class FactorModel:
    """Fitted factor basis for one class.

    ``loadings`` columns are factor directions, ordered by eigenvalue.
    ``category_codes[j]`` maps tokens of qualitative column j to their
    frequency-rank code (None for quantitative columns). ``origin`` is the
    reference-frame mean of the coded columns.
    """
    class_index: int
    kinds: tuple[FeatureKind, ...]
    means: np.ndarray
    scales: np.ndarray
    live: np.ndarray
    origin: np.ndarray
    category_codes: tuple[dict[str, int] | None, ...]
    loadings: np.ndarray
    eigenvalues: np.ndarray
    relation: RelationMatrix

    @property
    def shift(self) -> np.ndarray:
        """Class location relative to the frame origin, in standardized units."""
        d = (self.means - self.origin) / self.scales
        return np.where(self.live, d, 0.0)

    @property
    def n_factors(self) -> int:
        return self.loadings.shape[1]

    def explained_ratio(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        return self.eigenvalues / total if total > 0 else np.zeros_like(self.eigenvalues)


@dataclass(frozen=True, eq=False)
class FactorScores:
    values: np.ndarray
    class_index: int


def _quantify(tokens: np.ndarray) -> dict[str, int]:
    uniq, counts = np.unique(tokens.astype(str), return_counts=True)
    order = sorted(range(len(uniq)), key=lambda i: (-counts[i], uniq[i]))
    return {str(uniq[i]): rank for rank, i in enumerate(order)}


def _raw_matrix(data: Dataset, codes: tuple[dict[str, int] | None, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Numeric matrix of a dataset under a model's quantification.

    Returns the matrix and a mask of cells whose category was unseen.
    """
    n, k = data.n_rows, data.n_features
    out = np.empty((n, k))
    unseen = np.zeros((n, k), dtype=bool)
    for j in range(k):
        table = codes[j]
        if table is None:
            out[:, j] = data.columns[j]
            continue
        lv = data.levels[j]
        lut = np.array([table.get(t, np.nan) for t in lv], dtype=np.float64)
        col = lut[data.columns[j]] if lut.size else np.empty(n)
        unseen[:, j] = np.isnan(col)
        out[:, j] = col
    return out, unseen


@dataclass(frozen=True, eq=False)
class Frame:
    """Shared quantification and origin for the factor models of all classes."""
    category_codes: tuple[dict[str, int] | None, ...]
    origin: np.ndarray


def reference_frame(data: Dataset) -> Frame:
    if data.n_rows == 0:
        raise DegenerateDataError("reference frame needs at least one row")
    codes = tuple(None if k is FeatureKind.QUANTITATIVE else _quantify(data.tokens(j))
                  for j, k in enumerate(data.schema.kinds))
    raw, _ = _raw_matrix(data, codes)
    return Frame(codes, raw.mean(axis=0))


def fit_famd(part: Dataset, class_index: int = 1,
             frame: Frame | None = None) -> tuple[FactorModel, FactorScores]:
    """Fit one class's factor model; scores are unstandardized against ``frame``."""
    if part.n_rows < 2:
        raise DegenerateDataError(f"class {class_index}: need at least 2 rows, got {part.n_rows}")
    kinds = tuple(part.schema.kinds)
    frame = frame if frame is not None else reference_frame(part)
    if len(frame.category_codes) != len(kinds):
        raise DataError("reference frame does not match the partition schema")
    codes = frame.category_codes
    raw, unseen = _raw_matrix(part, codes)
    if unseen.any():
        raise DataError(f"class {class_index}: partition holds categories missing from the reference frame")
    means = raw.mean(axis=0)
    std = raw.std(axis=0)
    live = std > _VAR_EPS * np.maximum(1.0, np.abs(means))
    if not live.any():
        raise DegenerateDataError(f"class {class_index}: every column is constant")
    scales = np.where(live, std, 1.0)
    z = (raw - means) / scales
    z[:, ~live] = 0.0
    # correlation matrix of the standardized columns; its quantitative block
    # squared elementwise is the pearson_sq block of the relation matrix
    signed = (z.T @ z) / part.n_rows
    np.fill_diagonal(signed, live.astype(float))
    u, s, _ = np.linalg.svd(signed, hermitian=True)
    order = np.argsort(-s, kind="stable")
    s, u = s[order], u[:, order]
    u = _fix_signs(u)
    model = FactorModel(
        class_index=class_index, kinds=kinds, means=means, scales=scales, live=live,
        origin=np.asarray(frame.origin, dtype=np.float64), category_codes=codes,
        loadings=u, eigenvalues=s, relation=relation_matrix(part, live),
    )
    return model, FactorScores((z + model.shift) @ u, class_index)


def _fix_signs(u: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def standardize(model: FactorModel, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Standardized matrix of ``data`` under ``model``, plus per-row unseen flags."""
    if tuple(data.schema.kinds) != model.kinds:
        raise DataError("dataset schema does not match the factor model")
    raw, unseen = _raw_matrix(data, model.category_codes)
    z = (raw - model.means) / model.scales
    # constant-in-training columns carry no factor information
    z[:, ~model.live] = 0.0
    z[unseen] = 0.0
    unseen_rows = unseen.any(axis=1)
    if unseen_rows.any():
        log.warning("class %d model: %d rows carry unseen categories",
                    model.class_index, int(unseen_rows.sum()))
    return z, unseen_rows


def project_batch(model: FactorModel, data: Dataset, factors=None,
                  standardized: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Factor scores of every row (optionally only the listed factor indices).

    With ``standardized`` the class-location shift is left out.
    """
    z, flags = standardize(model, data)
    if not standardized:
        z = z + model.shift
    basis = model.loadings if factors is None else model.loadings[:, list(factors)]
    return z @ basis, flags


def project(model: FactorModel, sample, factors=None,
            standardized: bool = False) -> tuple[np.ndarray, bool]:
    """Project one K-vector of cell values. Returns scores and an unseen-category flag."""
    if len(sample) != len(model.kinds):
        raise DataError(f"sample has {len(sample)} cells, model expects {len(model.kinds)}")
    schema = Schema(tuple(Column(f"f{j}", k) for j, k in enumerate(model.kinds)))
    ds = Dataset.from_rows(schema, [list(sample)])
    scores, flags = project_batch(model, ds, factors, standardized)
    return scores[0], bool(flags[0])
