"""Mixed-type tabular data: schema, loading, partitioning and splitting.

Quantitative columns are stored as float64 arrays. Qualitative columns are
interned: an int32 code array plus the tuple of category tokens the codes
index into.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed inputs, with row/column position when known."""


class EmptyClassError(DataError):
    pass


class FeatureKind(str, enum.Enum):
    QUANTITATIVE = "quantitative"
    QUALITATIVE = "qualitative"

    @classmethod
    def parse(cls, text: str) -> "FeatureKind":
        key = text.strip().lower()
        aliases = {"quant": "quantitative", "qual": "qualitative",
                   "numeric": "quantitative", "categorical": "qualitative"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise DataError(f"unknown feature kind {text!r}") from None


@dataclass(frozen=True)
class Column:
    name: str
    kind: FeatureKind


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]
    label_column: str | None = None

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")
        if not names:
            raise DataError("schema needs at least one feature column")
        if self.label_column is not None and self.label_column in names:
            raise DataError(f"label column {self.label_column!r} is also a feature")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def kinds(self) -> list[FeatureKind]:
        return [c.kind for c in self.columns]

    def __len__(self) -> int:
        return len(self.columns)

    def to_dict(self) -> dict:
        return {
            "columns": [{"name": c.name, "kind": c.kind.value} for c in self.columns],
            "label_column": self.label_column,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Schema":
        try:
            cols = tuple(Column(str(c["name"]), FeatureKind.parse(c["kind"]))
                         for c in obj["columns"])
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed schema: {exc}") from None
        return cls(cols, obj.get("label_column"))

    @classmethod
    def quantitative(cls, names: Iterable[str], label_column: str | None = None) -> "Schema":
        return cls(tuple(Column(n, FeatureKind.QUANTITATIVE) for n in names), label_column)


def load_schema(path: str | Path) -> tuple[Schema, dict]:
    """Read a JSON schema sidecar. Returns the schema and the raw document,
    which may also carry a ``predictions`` path."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"schema file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    return Schema.from_dict(doc), doc


def save_schema(schema: Schema, path: str | Path, **extra) -> None:
    doc = schema.to_dict()
    doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True, eq=False)
class Dataset:
    schema: Schema
    columns: tuple[np.ndarray, ...]
    levels: tuple[tuple[str, ...] | None, ...]

    def __post_init__(self):
        if len(self.columns) != len(self.schema):
            raise DataError("column count does not match schema")
        n = {len(c) for c in self.columns}
        if len(n) > 1:
            raise DataError("columns have unequal lengths")
        for j, (col, kind) in enumerate(zip(self.columns, self.schema.kinds)):
            col.flags.writeable = False
            if kind is FeatureKind.QUANTITATIVE:
                if not np.all(np.isfinite(col)):
                    raise DataError(f"column {self.schema.names[j]!r}: non-finite value")
            elif self.levels[j] is None:
                raise DataError(f"column {self.schema.names[j]!r}: missing category table")

    @property
    def n_rows(self) -> int:
        return len(self.columns[0])

    def __len__(self) -> int:
        return self.n_rows

    @property
    def n_features(self) -> int:
        return len(self.schema)

    @classmethod
    def from_rows(cls, schema: Schema, rows: Sequence[Sequence]) -> "Dataset":
        """Build from row-major cell values (numbers and category tokens)."""
        k = len(schema)
        for r, row in enumerate(rows):
            if len(row) != k:
                raise DataError(f"row {r}: expected {k} cells, got {len(row)}")
        cols = [[row[j] for row in rows] for j in range(k)]
        return cls.from_columns(schema, cols)

    @classmethod
    def from_columns(cls, schema: Schema, cols: Sequence[Sequence]) -> "Dataset":
        arrays, levels = [], []
        for values, kind in zip(cols, schema.kinds):
            if kind is FeatureKind.QUANTITATIVE:
                arrays.append(np.asarray(values, dtype=np.float64).copy())
                levels.append(None)
            else:
                codes, lv = _intern([str(v) for v in values])
                arrays.append(codes)
                levels.append(lv)
        return cls(schema, tuple(arrays), tuple(levels))

    @classmethod
    def empty(cls, schema: Schema) -> "Dataset":
        return cls.from_columns(schema, [[] for _ in schema.columns])

    def tokens(self, j: int) -> np.ndarray:
        """Category tokens of qualitative column ``j`` as an object array."""
        lv = self.levels[j]
        if lv is None:
            raise DataError(f"column {self.schema.names[j]!r} is quantitative")
        return np.asarray(lv, dtype=object)[self.columns[j]] if len(lv) else \
            np.empty(self.n_rows, dtype=object)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.schema, tuple(c[idx].copy() for c in self.columns), self.levels)

    def row(self, i: int) -> list:
        out = []
        for j, col in enumerate(self.columns):
            lv = self.levels[j]
            out.append(float(col[i]) if lv is None else lv[col[i]])
        return out

    def quantitative_matrix(self) -> np.ndarray:
        if any(k is FeatureKind.QUALITATIVE for k in self.schema.kinds):
            raise DataError("dataset has qualitative columns")
        if self.n_rows == 0:
            return np.empty((0, self.n_features))
        return np.column_stack(self.columns)

    def concat(self, other: "Dataset") -> "Dataset":
        if other.schema != self.schema:
            raise DataError("cannot concatenate datasets with different schemas")
        cols = []
        for j in range(self.n_features):
            if self.levels[j] is None:
                cols.append(np.concatenate([self.columns[j], other.columns[j]]))
            else:
                cols.append(list(self.tokens(j)) + list(other.tokens(j)))
        return Dataset.from_columns(self.schema, cols)


def _intern(tokens: list[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    table: dict[str, int] = {}
    codes = np.empty(len(tokens), dtype=np.int32)
    for i, t in enumerate(tokens):
        codes[i] = table.setdefault(t, len(table))
    return codes, tuple(table)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    data: Dataset
    labels: np.ndarray
    n_classes: int = field(default=0)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or len(labels) != self.data.n_rows:
            raise DataError(f"expected {self.data.n_rows} labels, got {labels.size}")
        n_classes = self.n_classes or (int(labels.max()) if len(labels) else 2)
        if n_classes < 2:
            n_classes = 2
        if len(labels) and (labels.min() < 1 or labels.max() > n_classes):
            raise DataError(f"labels must lie in 1..{n_classes}")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "n_classes", n_classes)

    def __len__(self) -> int:
        return self.data.n_rows

    def take(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.intp)
        return LabeledDataset(self.data.take(idx), self.labels[idx], self.n_classes)


@dataclass(frozen=True, eq=False)
class ClassPartition:
    parts: tuple[Dataset, ...]
    # row indices into the source dataset, one array per class
    index: tuple[np.ndarray, ...]

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(p.n_rows for p in self.parts)

    def __len__(self) -> int:
        return len(self.parts)


def partition_by_label(ld: LabeledDataset) -> ClassPartition:
    parts, index = [], []
    for c in range(1, ld.n_classes + 1):
        idx = np.flatnonzero(ld.labels == c)
        if idx.size == 0:
            raise EmptyClassError(f"class {c} has no members; its densities cannot be fit")
        parts.append(ld.data.take(idx))
        index.append(idx)
    return ClassPartition(tuple(parts), tuple(index))


def train_test_split(ld: LabeledDataset, ratio: float = 0.8,
                     seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified, seeded split into ``floor(ratio*N)`` and the remaining rows.

    Per-class train quotas are largest-remainder allocations of the global
    train size, so each class keeps its proportion to within one row.
    """
    train_idx, test_idx = split_indices(ld.labels, ld.n_classes, ratio, seed)
    return ld.take(train_idx), ld.take(test_idx)


def split_indices(labels, n_classes: int, ratio: float = 0.8,
                  seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sorted train and test row indices of the split made by ``train_test_split``."""
    if not 0.0 < ratio < 1.0:
        raise DataError(f"ratio must lie strictly between 0 and 1, got {ratio}")
    labels = np.asarray(labels)
    n = len(labels)
    n_train = math.floor(ratio * n)
    rng = np.random.default_rng(seed)
    classes = [np.flatnonzero(labels == c) for c in range(1, n_classes + 1)]
    exact = np.array([len(idx) * n_train / n for idx in classes]) if n else np.zeros(0)
    quota = np.floor(exact).astype(int)
    short = n_train - int(quota.sum())
    if short:
        order = np.argsort(-(exact - quota), kind="stable")
        quota[order[:short]] += 1
    train, test = [], []
    for idx, q in zip(classes, quota):
        perm = rng.permutation(idx)
        train.append(perm[:q])
        test.append(perm[q:])
    train_idx = np.sort(np.concatenate(train)) if train else np.array([], dtype=int)
    test_idx = np.sort(np.concatenate(test)) if test else np.array([], dtype=int)
    return train_idx, test_idx


def load_csv(path: str | Path, schema: Schema) -> Dataset:
    """Parse a headered UTF-8 CSV according to ``schema``.

    Extra columns in the file are ignored (the label column among them).
    """
    data, _ = _read_csv(path, schema, with_labels=False)
    return data


def load_labeled_csv(path: str | Path, schema: Schema,
                     predictions: str | Path | None = None,
                     n_classes: int = 0) -> LabeledDataset:
    """Load a dataset plus labels, from ``schema.label_column`` or a predictions file."""
    if predictions is None and schema.label_column is None:
        raise DataError("no label source: schema has no label_column and no predictions file given")
    data, labels = _read_csv(path, schema, with_labels=predictions is None)
    if predictions is not None:
        labels = load_predictions(predictions, data.n_rows, n_classes)
    return LabeledDataset(data, labels, n_classes)


def _read_csv(path, schema: Schema, with_labels: bool):
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"data file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        pos = {}
        for name in schema.names + ([schema.label_column] if with_labels else []):
            if name not in header:
                raise DataError(f"{path}: missing column {name!r} in header")
            pos[name] = header.index(name)
        kinds = schema.kinds
        cols: list[list] = [[] for _ in schema.columns]
        labels: list[int] = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {lineno}: expected {len(header)} fields, got {len(rec)}")
            for j, name in enumerate(schema.names):
                cell = rec[pos[name]].strip()
                if cell == "":
                    raise DataError(f"{path}: row {lineno}, column {name!r}: missing value")
                if kinds[j] is FeatureKind.QUANTITATIVE:
                    try:
                        v = float(cell)
                    except ValueError:
                        raise DataError(f"{path}: row {lineno}, column {name!r}: "
                                        f"cannot parse {cell!r} as a number") from None
                    if not math.isfinite(v):
                        raise DataError(f"{path}: row {lineno}, column {name!r}: non-finite value")
                    cols[j].append(v)
                else:
                    cols[j].append(cell)
            if with_labels:
                cell = rec[pos[schema.label_column]].strip()
                try:
                    labels.append(int(cell))
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column {schema.label_column!r}: "
                                    f"label {cell!r} is not an integer") from None
    if not cols[0]:
        raise DataError(f"{path}: no data rows")
    return Dataset.from_columns(schema, cols), np.asarray(labels, dtype=np.int64)


def load_predictions(path: str | Path, n_rows: int | None = None, n_classes: int = 0) -> np.ndarray:
    """One integer class index per line; blank lines are not allowed."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise DataError(f"predictions file not found: {path}") from None
    out = np.empty(len(lines), dtype=np.int64)
    for i, line in enumerate(lines, start=1):
        try:
            out[i - 1] = int(line.strip())
        except ValueError:
            raise DataError(f"{path}: line {i}: {line!r} is not a class index") from None
    if n_rows is not None and len(out) != n_rows:
        raise DataError(f"{path}: {len(out)} predictions for {n_rows} data rows")
    if len(out) and out.min() < 1:
        raise DataError(f"{path}: class indices start at 1")
    if n_classes and len(out) and out.max() > n_classes:
        raise DataError(f"{path}: class index {out.max()} exceeds {n_classes} classes")
    return out


def save_predictions(labels, path: str | Path) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels), encoding="utf-8")


def write_csv(ld: LabeledDataset | Dataset, path: str | Path, label_name: str = "label") -> None:
    data = ld.data if isinstance(ld, LabeledDataset) else ld
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = data.schema.names + ([label_name] if isinstance(ld, LabeledDataset) else [])
        w.writerow(header)
        cells = []
        for j in range(data.n_features):
            if data.levels[j] is None:
                cells.append([repr(float(v)) for v in data.columns[j]])
            else:
                cells.append(list(data.tokens(j)))
        if isinstance(ld, LabeledDataset):
            cells.append([str(int(v)) for v in ld.labels])
        for row in zip(*cells):
            w.writerow(row)
