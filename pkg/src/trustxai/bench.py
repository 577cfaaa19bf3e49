"""Timing harness: explain-time scaling, mode-search cost, baseline comparison."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from .baseline import baseline_local_surrogate
from .data import LabeledDataset
from .explainer import build_core, explain_batch, machine_metadata
from .famd import project_batch
from .modesearch import SearchZone, fast_grid_select, grid_mode_select
from .primary_model import TrainConfig, fit_reference
from .synth import generate_synthetic, separable_spec

log = logging.getLogger(__name__)

DEFAULT_SIZES = (1000, 5000, 10000, 50000, 100000)


@dataclass(frozen=True)
class TimingRecord:
    stage: str
    n: int
    k: int
    seconds: float
    candidate_evaluations: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.seconds < 0:
            raise ValueError("negative duration")


def _best_of(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def linear_fit_r2(x, y) -> float:
    """Coefficient of determination of the least-squares line through (x, y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return float(1.0 - np.sum(resid ** 2) / ss_tot) if ss_tot > 0 else 1.0


def explain_scaling(core, sizes=DEFAULT_SIZES, seed: int = 0, repeats: int = 3,
                    spec: dict | None = None) -> list[TimingRecord]:
    spec = spec or separable_spec()
    pool = generate_synthetic(spec, seed=seed + 1, n=max(sizes))
    records = []
    for n in sorted(sizes):
        data = pool.data.take(np.arange(n))
        secs = _best_of(lambda: explain_batch(core, data), repeats)
        records.append(TimingRecord("explain", n, core.k, secs))
    return records


def mode_search_cost(values, zone: SearchZone, seed: int = 0, k: int = 1) -> list[TimingRecord]:
    n = sum(len(v) for v in values)
    out = []
    for name, fn in (("modes_full", grid_mode_select), ("modes_fast", fast_grid_select)):
        t0 = time.perf_counter()
        ma = fn(values, zone, seed)
        out.append(TimingRecord(name, n, k, time.perf_counter() - t0, ma.evaluations))
    return out


def baseline_comparison(core, model, data, n_samples: int = 1000, n_perturbations: int = 5000,
                        seed: int = 0) -> dict:
    """Wall time of explaining ``n_samples`` rows with the core versus the surrogate baseline.

    ``data`` must be quantitative-only so the baseline can perturb it directly.
    """
    sub = data.take(np.arange(min(n_samples, data.n_rows)))
    t0 = time.perf_counter()
    explain_batch(core, sub)
    trust_s = time.perf_counter() - t0
    x = sub.quantitative_matrix()
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    t0 = time.perf_counter()
    for i in range(sub.n_rows):
        baseline_local_surrogate(model, x[i], n_perturbations, seed + i, scale)
    base_s = time.perf_counter() - t0
    return {"n_samples": sub.n_rows, "n_perturbations": n_perturbations,
            "trust_seconds": trust_s, "baseline_seconds": base_s,
            "speedup": base_s / trust_s if trust_s > 0 else float("inf")}


def run_bench(sizes=DEFAULT_SIZES, k: int = 2, n_train: int = 10000, seed: int = 0,
              zone_max: int = 20, subzone: int = 5, baseline_samples: int = 1000,
              n_perturbations: int = 5000, repeats: int = 3) -> dict:
    """Full harness on the separable synthetic suite; returns a JSON-ready dict."""
    spec = separable_spec()
    spec["columns"] = [c for c in spec["columns"] if c.get("kind", "quantitative") == "quantitative"]
    train = generate_synthetic(spec, seed=seed, n=n_train)
    model = fit_reference(train, TrainConfig(seed=seed))
    predicted = LabeledDataset(train.data, model.predict(train.data), train.n_classes)
    zone = SearchZone.square(2, zone_max, subzone_edge=subzone)
    timings: list = []
    t0 = time.perf_counter()
    core = build_core(predicted, k, zone=zone, seed=seed, timings=timings)
    build_s = time.perf_counter() - t0
    records = [TimingRecord("build", n_train, k, build_s,
                            sum((d or {}).get("candidate_evaluations", 0) for _, _, d in timings))]
    records += [TimingRecord(stage, n_train, k, secs, (d or {}).get("candidate_evaluations", 0))
                for stage, secs, d in timings]
    scaling = explain_scaling(core, sizes, seed, repeats, spec)
    records += scaling
    parts = [predicted.data.take(np.flatnonzero(predicted.labels == c)) for c in (1, 2)]
    rep = int(core.reps.indices[0])
    values = [project_batch(m, p, [rep])[0][:, 0] for m, p in zip(core.models, parts)]
    records += mode_search_cost(values, zone, seed, k)
    comparison = baseline_comparison(core, model, predicted.data, baseline_samples, n_perturbations, seed)
    # the surrogate has no build phase, so report the comparison both ways
    comparison["build_seconds"] = build_s
    comparison["trust_with_build_seconds"] = build_s + comparison["trust_seconds"]
    comparison["speedup_with_build"] = comparison["baseline_seconds"] / comparison["trust_with_build_seconds"]
    return {
        "records": [asdict(r) for r in records],
        "explain_r2": linear_fit_r2([r.n for r in scaling], [r.seconds for r in scaling]),
        "baseline": comparison,
        "machine": machine_metadata(),
    }
