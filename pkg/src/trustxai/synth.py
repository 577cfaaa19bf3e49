"""Seeded synthetic labeled datasets described by a small JSON-style spec.

Example spec (two classes)::

    {
      "n": 1000,
      "class_weights": [0.5, 0.5],
      "latents": {"s": [[[1.0, 0.0, 3.0]], [[0.5, 12.0, 1.0], [0.5, 20.0, 1.0]]]},
      "columns": [
        {"name": "x1", "mixtures": [[[1.0, 0.0, 1.0]], [[1.0, 10.0, 1.0]]]},
        {"name": "x2", "latent": "s", "scale": 1.0, "noise": 0.3},
        {"name": "proto", "kind": "qualitative", "levels": ["tcp", "udp"],
         "probs": [[0.9, 0.1], [0.2, 0.8]]}
      ],
      "noise_columns": 3
    }

Mixtures are lists of ``[weight, mean, std]`` components, one list per class.
Noise columns are standard normal regardless of class.
"""
from __future__ import annotations

import copy
import math

import numpy as np

from .data import Column, Dataset, FeatureKind, LabeledDataset, Schema


class SpecError(ValueError):
    pass


def _check_mixture(mix, where: str):
    try:
        comps = [(float(g), float(m), float(s)) for g, m, s in mix]
    except (TypeError, ValueError):
        raise SpecError(f"{where}: components must be [weight, mean, std] triples") from None
    if not comps:
        raise SpecError(f"{where}: empty mixture")
    w = np.array([c[0] for c in comps])
    if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
        raise SpecError(f"{where}: component weights must be positive and sum to 1")
    if any(c[2] < 0 for c in comps):
        raise SpecError(f"{where}: negative standard deviation")
    return comps


def _draw_mixture(rng: np.random.Generator, comps, n: int) -> np.ndarray:
    w = np.array([c[0] for c in comps])
    which = rng.choice(len(comps), size=n, p=w / w.sum())
    mu = np.array([c[1] for c in comps])[which]
    sd = np.array([c[2] for c in comps])[which]
    return mu + sd * rng.standard_normal(n)


def _class_counts(n: int, weights: np.ndarray) -> np.ndarray:
    exact = weights / weights.sum() * n
    counts = np.floor(exact).astype(int)
    short = n - counts.sum()
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def generate_synthetic(spec: dict, seed: int = 0, n: int | None = None) -> LabeledDataset:
    spec = copy.deepcopy(spec)
    n = int(n if n is not None else spec.get("n", 0))
    columns = spec.get("columns", [])
    n_noise = int(spec.get("noise_columns", 0))
    latents = spec.get("latents", {})
    n_classes = None
    for col in columns:
        if "mixtures" in col:
            n_classes = len(col["mixtures"])
        elif "probs" in col:
            n_classes = len(col["probs"])
        if n_classes:
            break
    if n_classes is None and latents:
        n_classes = len(next(iter(latents.values())))
    weights = np.asarray(spec.get("class_weights") or [1.0] * (n_classes or 2), dtype=float)
    n_classes = n_classes or len(weights)
    if n_classes < 2 or len(weights) != n_classes or np.any(weights <= 0):
        raise SpecError("need at least two classes with positive class weights")
    if n < 2 * n_classes:
        raise SpecError(f"n={n} is below the minimum of {2 * n_classes} rows")
    if not columns and not n_noise:
        raise SpecError("spec defines no columns")

    rng = np.random.default_rng(seed)
    counts = _class_counts(n, weights)
    labels = rng.permutation(np.repeat(np.arange(1, n_classes + 1), counts))
    masks = [labels == c + 1 for c in range(n_classes)]

    latent_values = {}
    for name, per_class in latents.items():
        if len(per_class) != n_classes:
            raise SpecError(f"latent {name!r}: expected {n_classes} class mixtures")
        v = np.empty(n)
        for c, mix in enumerate(per_class):
            v[masks[c]] = _draw_mixture(rng, _check_mixture(mix, f"latent {name!r}"), int(counts[c]))
        latent_values[name] = v

    schema_cols, data_cols = [], []
    for col in columns:
        name = col.get("name")
        if not name:
            raise SpecError("every column needs a name")
        kind = FeatureKind.parse(col.get("kind", "quantitative"))
        if kind is FeatureKind.QUALITATIVE:
            levels = [str(t) for t in col["levels"]]
            probs = col["probs"]
            if len(probs) != n_classes or any(len(p) != len(levels) for p in probs):
                raise SpecError(f"column {name!r}: probs must be {n_classes} x {len(levels)}")
            out = np.empty(n, dtype=object)
            for c, p in enumerate(probs):
                p = np.asarray(p, dtype=float)
                if np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
                    raise SpecError(f"column {name!r}: class {c + 1} probabilities must sum to 1")
                out[masks[c]] = np.asarray(levels, dtype=object)[rng.choice(len(levels), size=int(counts[c]), p=p)]
            values = out.tolist()
        elif "latent" in col:
            if col["latent"] not in latent_values:
                raise SpecError(f"column {name!r}: unknown latent {col['latent']!r}")
            values = (float(col.get("scale", 1.0)) * latent_values[col["latent"]]
                      + float(col.get("offset", 0.0))
                      + float(col.get("noise", 0.0)) * rng.standard_normal(n))
        elif "mixtures" in col:
            if len(col["mixtures"]) != n_classes:
                raise SpecError(f"column {name!r}: expected {n_classes} class mixtures")
            values = np.empty(n)
            for c, mix in enumerate(col["mixtures"]):
                values[masks[c]] = _draw_mixture(rng, _check_mixture(mix, f"column {name!r}"), int(counts[c]))
        else:
            raise SpecError(f"column {name!r}: needs 'mixtures', 'latent' or qualitative 'levels'")
        schema_cols.append(Column(name, kind))
        data_cols.append(values)
    for j in range(n_noise):
        schema_cols.append(Column(f"noise{j + 1}", FeatureKind.QUANTITATIVE))
        data_cols.append(rng.standard_normal(n))
    schema = Schema(tuple(schema_cols), label_column="label")
    return LabeledDataset(Dataset.from_columns(schema, data_cols), labels, n_classes)


def separable_spec(n: int = 5000) -> dict:
    """Two well-separated classes with a correlated informative block.

    Within each class the three ``sig`` columns share one latent variable,
    so the leading factor of every class loads on them; the latent is
    unimodal for class 1 and bimodal for class 2, far apart.
    """
    return {
        "n": n,
        "class_weights": [0.5, 0.5],
        "latents": {"s": [[[1.0, 0.0, 2.0]],
                          [[0.5, 14.0, 1.5], [0.5, 22.0, 1.5]]]},
        "columns": [
            {"name": "sig1", "latent": "s", "scale": 1.0, "noise": 0.4},
            {"name": "sig2", "latent": "s", "scale": 0.8, "noise": 0.4},
            {"name": "sig3", "latent": "s", "scale": -0.6, "noise": 0.4},
            {"name": "rate", "mixtures": [[[0.7, 1.0, 0.5], [0.3, 4.0, 0.5]],
                                          [[1.0, 8.0, 1.0]]]},
            {"name": "proto", "kind": "qualitative", "levels": ["tcp", "udp", "icmp"],
             "probs": [[0.8, 0.15, 0.05], [0.1, 0.3, 0.6]]},
        ],
        "noise_columns": 3,
    }


def two_gaussians_spec(n: int = 10000, noise_columns: int = 10) -> dict:
    """Informative column N(0, 1) for class 1 and N(10, 1) for class 2, plus noise."""
    return {
        "n": n,
        "columns": [{"name": "informative", "mixtures": [[[1.0, 0.0, 1.0]], [[1.0, 10.0, 1.0]]]}],
        "noise_columns": noise_columns,
    }
