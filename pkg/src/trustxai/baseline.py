"""Minimal perturbation-based local surrogate, used only as a timing baseline.

For one sample: draw normal perturbations around it, label them with the
black box, weight them by an exponential kernel on their distance to the
sample, and fit weighted least squares to the indicator of the sample's
predicted class. Every sample costs ``n_perturbations`` model probes.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

MIN_PERTURBATIONS = 10


@dataclass(frozen=True, eq=False)
class SurrogateResult:
    coefficients: np.ndarray
    intercept: float
    target_class: int
    seconds: float


def _probe(model) -> Callable[[np.ndarray], np.ndarray]:
    if hasattr(model, "predict_matrix"):
        return model.predict_matrix
    if callable(model):
        return model
    raise TypeError("model must be callable on a numeric matrix or expose predict_matrix")


def baseline_local_surrogate(model, sample, n_perturbations: int = 5000, seed: int = 0,
                             scale=None, kernel_width: float | None = None) -> SurrogateResult:
    if n_perturbations < MIN_PERTURBATIONS:
        raise ValueError(f"need at least {MIN_PERTURBATIONS} perturbations, got {n_perturbations}")
    predict = _probe(model)
    start = time.perf_counter()
    x = np.asarray(sample, dtype=np.float64).reshape(-1)
    d = x.size
    scale = np.ones(d) if scale is None else np.asarray(scale, dtype=np.float64)
    width = kernel_width if kernel_width is not None else 0.75 * np.sqrt(d)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((n_perturbations, d))
    pts = x + noise * scale
    try:
        target = int(np.asarray(predict(x[None, :]))[0])
        y = (np.asarray(predict(pts)) == target).astype(np.float64)
    except Exception as exc:
        raise RuntimeError(f"model probe failed: {exc}") from exc
    dist = np.linalg.norm(noise, axis=1)
    sw = np.sqrt(np.exp(-(dist ** 2) / width ** 2))
    design = np.column_stack([np.ones(n_perturbations), noise])
    coef, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    return SurrogateResult(coef[1:] / scale, float(coef[0]), target, time.perf_counter() - start)
