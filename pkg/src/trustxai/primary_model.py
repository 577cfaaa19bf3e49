"""The black-box classifier contract and a small reference classifier.

The explainer only ever calls ``predict(dataset) -> labels``. The reference
classifier is a multinomial logistic regression trained by full-batch
gradient descent; it exists so the test suite has a deterministic model to
explain.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .data import DataError, Dataset, FeatureKind, LabeledDataset, Schema, load_predictions

log = logging.getLogger(__name__)


@runtime_checkable
class BlackBoxClassifier(Protocol):
    def predict(self, data: Dataset) -> np.ndarray: ...


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 0.5
    l2: float = 1e-4
    seed: int = 0


def _softmax(a: np.ndarray) -> np.ndarray:
    a = a - a.max(axis=1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class ReferenceClassifier:
    schema: Schema
    n_classes: int
    means: np.ndarray
    scales: np.ndarray
    categories: tuple[tuple[str, ...] | None, ...]
    weights: np.ndarray            # D x C
    bias: np.ndarray               # C
    config: TrainConfig = TrainConfig()
    loss_history: tuple[float, ...] = field(default=(), repr=False)

    def design(self, data: Dataset) -> np.ndarray:
        return _design(data, self.schema, self.means, self.scales, self.categories)

    def decision_function(self, data: Dataset) -> np.ndarray:
        return self.design(data) @ self.weights + self.bias

    def predict_proba(self, data: Dataset) -> np.ndarray:
        return _softmax(self.decision_function(data))

    def predict(self, data: Dataset) -> np.ndarray:
        if data.schema.kinds != self.schema.kinds:
            raise DataError("dataset schema does not match the classifier")
        if data.n_rows == 0:
            return np.empty(0, dtype=np.int64)
        return np.argmax(self.decision_function(data), axis=1).astype(np.int64) + 1

    def predict_matrix(self, x: np.ndarray) -> np.ndarray:
        """Predict from a raw numeric matrix (quantitative-only schemas)."""
        if self.categories and any(c is not None for c in self.categories):
            raise DataError("predict_matrix needs a quantitative-only schema")
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        z = (x - self.means) / self.scales
        return np.argmax(z @ self.weights + self.bias, axis=1).astype(np.int64) + 1


def _design(data: Dataset, schema: Schema, means, scales, categories) -> np.ndarray:
    if data.schema.kinds != schema.kinds:
        raise DataError("dataset schema does not match the classifier")
    parts = []
    qi = 0
    for j, kind in enumerate(schema.kinds):
        if kind is FeatureKind.QUANTITATIVE:
            parts.append(((data.columns[j] - means[qi]) / scales[qi])[:, None])
            qi += 1
        else:
            cats = categories[j]
            lookup = {t: i for i, t in enumerate(cats)}
            lut = np.array([lookup.get(t, -1) for t in data.levels[j]], dtype=np.int64)
            code = lut[data.columns[j]] if lut.size else np.empty(data.n_rows, dtype=np.int64)
            onehot = np.zeros((data.n_rows, len(cats)))
            hit = code >= 0
            onehot[np.flatnonzero(hit), code[hit]] = 1.0
            parts.append(onehot)
    return np.hstack(parts) if parts else np.empty((data.n_rows, 0))


def fit_reference(train: LabeledDataset, config: TrainConfig = TrainConfig()) -> ReferenceClassifier:
    """Train on ground-truth labels. The loss is kept non-increasing by halving
    the step whenever a step would raise it."""
    labels = train.labels
    if len(np.unique(labels)) < 2:
        raise DataError("reference classifier needs at least two classes in the training set")
    data = train.data
    schema = data.schema
    quant = [j for j, k in enumerate(schema.kinds) if k is FeatureKind.QUANTITATIVE]
    qmat = np.column_stack([data.columns[j] for j in quant]) if quant else np.empty((len(train), 0))
    means = qmat.mean(axis=0)
    scales = qmat.std(axis=0)
    scales[scales == 0] = 1.0
    categories = tuple(None if k is FeatureKind.QUANTITATIVE else tuple(sorted(set(data.levels[j][c] for c in np.unique(data.columns[j]))))
                       for j, k in enumerate(schema.kinds))
    x = _design(data, schema, means, scales, categories)
    n, d = x.shape
    c = train.n_classes
    y = np.zeros((n, c))
    y[np.arange(n), labels - 1] = 1.0
    rng = np.random.default_rng(config.seed)
    w = rng.normal(0.0, 0.01, size=(d, c))
    b = np.zeros(c)

    def loss_grad(w, b):
        p = _softmax(x @ w + b)
        loss = -np.sum(y * np.log(np.clip(p, 1e-300, None))) / n + 0.5 * config.l2 * np.sum(w * w)
        g = (p - y) / n
        return loss, x.T @ g + config.l2 * w, g.sum(axis=0)

    lr = config.learning_rate
    loss, gw, gb = loss_grad(w, b)
    history = [loss]
    for _ in range(config.epochs):
        while True:
            w_new, b_new = w - lr * gw, b - lr * gb
            new_loss, new_gw, new_gb = loss_grad(w_new, b_new)
            if new_loss <= loss or lr < 1e-8:
                break
            lr *= 0.5
        if new_loss > loss:
            break
        w, b, loss, gw, gb = w_new, b_new, new_loss, new_gw, new_gb
        history.append(loss)
    log.info("reference classifier: %d epochs, final loss %.5f", len(history) - 1, loss)
    return ReferenceClassifier(schema, c, means, scales, categories, w, b, config, tuple(history))


@dataclass(frozen=True, eq=False)
class PredictionsFile:
    """Adapts a precomputed predictions file to the classifier contract.

    Rows are matched by position, so ``predict`` only accepts datasets of
    the recorded length.
    """
    labels: np.ndarray

    @classmethod
    def load(cls, path: str | Path, n_classes: int = 0) -> "PredictionsFile":
        return cls(load_predictions(path, n_classes=n_classes))

    def predict(self, data: Dataset) -> np.ndarray:
        if data.n_rows != len(self.labels):
            raise DataError(f"predictions cover {len(self.labels)} rows, dataset has {data.n_rows}")
        return self.labels.copy()


def predict(model: BlackBoxClassifier, data: Dataset) -> np.ndarray:
    labels = np.asarray(model.predict(data), dtype=np.int64)
    if labels.shape != (data.n_rows,):
        raise DataError(f"classifier returned {labels.shape} labels for {data.n_rows} rows")
    if labels.size and labels.min() < 1:
        raise DataError("classifier returned a class index below 1")
    return labels
