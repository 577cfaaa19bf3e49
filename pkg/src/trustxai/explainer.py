"""Build-once / explain-many orchestration around the fitted core.

The core holds one factor model per class, the representative factors with
their weights, and a representative-by-class grid of mixture densities. A
sample is explained by projecting it with every class's factor model,
scoring each representative under that class's density, and taking the
class with the largest weighted total.
"""
from __future__ import annotations

import hashlib
import io
import json
import logging
import platform
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .data import Column, DataError, Dataset, FeatureKind, LabeledDataset, Schema, partition_by_label
from .famd import FactorModel, RelationMatrix, fit_famd, project_batch, reference_frame
from .metrics import ConfusionMatrix, summary
from .mmg import ClassLikelihood, Explanation, MmgDensity, argmax_label, em_fit, per_rep_log_likelihoods
from .modesearch import ModeAssignment, SearchZone, fast_grid_select, grid_mode_select
from .reps import DEFAULT_BINS, RepresentativeSet, pick_representatives

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAGIC = b"TRUSTXAI"


class BuildError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"build failed at stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause


class CoreFormatError(ValueError):
    pass


class CorruptCoreError(CoreFormatError):
    pass


class CoreVersionError(CoreFormatError):
    pass


class SchemaMismatchError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class TrustCore:
    schema: Schema
    n_classes: int
    models: tuple[FactorModel, ...]
    reps: RepresentativeSet
    densities: tuple[tuple[MmgDensity, ...], ...]     # [rep][class]
    modes: tuple[ModeAssignment, ...]
    metadata: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.reps.k


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except BuildError:
        raise
    except Exception as exc:
        raise BuildError(name, exc) from exc


def build_core(ld: LabeledDataset, k: int, bins: int = DEFAULT_BINS, zone: SearchZone | None = None,
               seed: int = 0, fast: bool = True, timings: list | None = None) -> TrustCore:
    """Fit the explainer core from data and the labels the black box assigned.

    ``timings``, when given, receives (stage, seconds, detail) tuples.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if k > ld.data.n_features:
        raise ValueError(f"k={k} exceeds the {ld.data.n_features} available factors")
    n_classes = ld.n_classes
    zone = zone or SearchZone.square(n_classes)
    if zone.n_classes != n_classes:
        raise ValueError(f"search zone has {zone.n_classes} axes for {n_classes} classes")
    started = time.time()
    clock = time.perf_counter()

    def tick(stage, detail=None):
        nonlocal clock
        now = time.perf_counter()
        if timings is not None:
            timings.append((stage, now - clock, detail))
        clock = now

    part = _stage("partition", partition_by_label, ld)
    tick("partition")
    frame = _stage("famd", reference_frame, ld.data)
    fitted = [_stage("famd", fit_famd, p, c + 1, frame) for c, p in enumerate(part.parts)]
    models = tuple(m for m, _ in fitted)
    scores = [s.values for _, s in fitted]
    tick("famd")
    stacked_labels = np.concatenate([np.full(n, c + 1) for c, n in enumerate(part.counts)])
    reps = _stage("reps", pick_representatives, scores, stacked_labels, k, bins)
    tick("reps")
    search = fast_grid_select if fast else grid_mode_select
    modes, densities = [], []
    evaluations = 0
    for slot, idx in enumerate(reps.indices):
        values = [s[:, idx] for s in scores]
        ma = _stage("modesearch", search, values, zone, seed, int(idx))
        evaluations += ma.evaluations
        modes.append(ma)
        densities.append(tuple(
            _stage("mmg", em_fit, values[c], ma.modes[c], seed, int(idx), c + 1)
            for c in range(n_classes)))
    tick("modesearch+mmg", {"candidate_evaluations": evaluations})
    meta = {
        "format_version": FORMAT_VERSION,
        "package_version": __version__,
        "seed": seed,
        "bins": bins,
        "k": k,
        "zone": zone.to_dict(),
        "fast_search": fast,
        "n_train": len(ld),
        "class_counts": list(part.counts),
        "built_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
        "build_seconds": time.time() - started,
    }
    return TrustCore(ld.data.schema, n_classes, models, reps, tuple(densities), tuple(modes), meta)


def _check_schema(core: TrustCore, data: Dataset):
    if data.schema.names != core.schema.names or data.schema.kinds != core.schema.kinds:
        raise SchemaMismatchError(
            f"sample schema {list(zip(data.schema.names, [k.value for k in data.schema.kinds]))} "
            f"does not match the core's {list(zip(core.schema.names, [k.value for k in core.schema.kinds]))}")


@dataclass(frozen=True, eq=False)
class BatchExplanation:
    projected: np.ndarray     # n x C x k
    per_rep: np.ndarray       # n x C x k
    totals: np.ndarray        # n x C
    labels: np.ndarray        # n, 1-based
    margins: np.ndarray       # n
    unseen: np.ndarray        # n x C, unseen category under class c's model
    primary_labels: np.ndarray | None = None
    confusion: ConfusionMatrix | None = None

    def __len__(self) -> int:
        return len(self.labels)

    def explanation(self, i: int) -> Explanation:
        flags = tuple(f"unseen_category:class{c + 1}" for c in np.flatnonzero(self.unseen[i]))
        per_class = tuple(ClassLikelihood(c + 1, self.per_rep[i, c].copy(), float(self.totals[i, c]))
                          for c in range(self.totals.shape[1]))
        return Explanation(self.projected[i].copy(), per_class, int(self.labels[i]),
                           float(self.margins[i]), flags)

    def __iter__(self):
        return (self.explanation(i) for i in range(len(self)))

    def fidelity(self) -> dict | None:
        if self.confusion is None or self.confusion.total == 0:
            return None
        return summary(self.confusion)


def explain_batch(core: TrustCore, samples: Dataset, primary_labels=None,
                  positive: int | None = None) -> BatchExplanation:
    """Explain every row; with primary labels also build the fidelity matrix."""
    _check_schema(core, samples)
    n, c, k = samples.n_rows, core.n_classes, core.k
    projected = np.empty((n, c, k))
    unseen = np.zeros((n, c), dtype=bool)
    for ci, model in enumerate(core.models):
        scores, flags = project_batch(model, samples, core.reps.indices)
        projected[:, ci, :] = scores
        unseen[:, ci] = flags
    per_rep = per_rep_log_likelihoods(core.densities, projected)
    totals = per_rep @ core.reps.normalized_weights
    if n:
        labels, margins = argmax_label(totals)
    else:
        labels, margins = np.empty(0, dtype=np.int64), np.empty(0)
    cm = None
    if primary_labels is not None:
        primary_labels = np.asarray(primary_labels, dtype=np.int64)
        if len(primary_labels) != n:
            raise DataError(f"{len(primary_labels)} primary labels for {n} samples")
        pos = positive if positive is not None else 1
        cm = ConfusionMatrix.from_labels(primary_labels, labels, n_classes=c, positive=pos)
    return BatchExplanation(projected, per_rep, totals, labels.astype(np.int64), margins, unseen,
                            primary_labels, cm)


# ---------------------------------------------------------------- persistence

class _Arrays:
    def __init__(self):
        self.entries: list[dict] = []
        self.buf = io.BytesIO()

    def put(self, arr) -> int:
        arr = np.ascontiguousarray(arr)
        if arr.dtype.kind == "f":
            arr = arr.astype("<f8", copy=False)
        elif arr.dtype.kind in "iub":
            arr = arr.astype("<i8", copy=False)
        else:
            raise TypeError(f"cannot store dtype {arr.dtype}")
        self.entries.append({"dtype": arr.dtype.str, "shape": list(arr.shape),
                             "offset": self.buf.tell(), "nbytes": arr.nbytes})
        self.buf.write(arr.tobytes())
        return len(self.entries) - 1


def _dump(core: TrustCore) -> bytes:
    arrays = _Arrays()
    models = []
    for m in core.models:
        models.append({
            "class_index": m.class_index,
            "kinds": [k.value for k in m.kinds],
            "category_codes": [None if t is None else sorted(t.items(), key=lambda kv: kv[1])
                               for t in m.category_codes],
            "means": arrays.put(m.means),
            "scales": arrays.put(m.scales),
            "live": arrays.put(m.live),
            "origin": arrays.put(m.origin),
            "loadings": arrays.put(m.loadings),
            "eigenvalues": arrays.put(m.eigenvalues),
            "relation": arrays.put(m.relation.values),
            "relation_kinds": [list(r) for r in m.relation.kinds],
        })
    reps = core.reps
    header = {
        "schema": core.schema.to_dict(),
        "n_classes": core.n_classes,
        "metadata": core.metadata,
        "models": models,
        "reps": {
            "indices": arrays.put(reps.indices),
            "raw_weights": arrays.put(reps.raw_weights),
            "normalized_weights": arrays.put(reps.normalized_weights),
            "ranking_index": arrays.put(np.array([i for i, _ in reps.ranking], dtype=np.int64)),
            "ranking_weight": arrays.put(np.array([w for _, w in reps.ranking], dtype=np.float64)),
        },
        "densities": [[{
            "rep_index": d.rep_index, "class_index": d.class_index, "flags": list(d.flags),
            "gamma": arrays.put(d.gamma), "mu": arrays.put(d.mu),
            "sigma": arrays.put(d.sigma), "alpha": arrays.put(d.alpha),
        } for d in row] for row in core.densities],
        "modes": [{
            "modes": list(ma.modes), "score": arrays.put(np.array([ma.score])),
            "evaluations": ma.evaluations, "center_evaluations": ma.center_evaluations,
            "flags": list(ma.flags),
        } for ma in core.modes],
        "arrays": arrays.entries,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(head)) + head + arrays.buf.getvalue()
    return body + hashlib.sha256(body).digest()


def save_core(core: TrustCore, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(_dump(core))
    tmp.replace(path)


def load_core(path: str | Path, expected_schema: Schema | None = None) -> TrustCore:
    blob = Path(path).read_bytes()
    prefix = len(MAGIC) + struct.calcsize("<IQ")
    if len(blob) < prefix + 32 or blob[:len(MAGIC)] != MAGIC:
        raise CoreFormatError(f"{path}: not a core file")
    version, head_len = struct.unpack_from("<IQ", blob, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CoreVersionError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCoreError(f"{path}: checksum mismatch")
    try:
        header = json.loads(body[prefix:prefix + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCoreError(f"{path}: unreadable header ({exc})") from None
    payload = body[prefix + head_len:]

    def arr(i):
        e = header["arrays"][i]
        a = np.frombuffer(payload, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)),
                          offset=e["offset"]).reshape(e["shape"]).copy()
        return a

    schema = Schema.from_dict(header["schema"])
    if expected_schema is not None and (expected_schema.names != schema.names
                                        or expected_schema.kinds != schema.kinds):
        raise SchemaMismatchError(f"{path}: core schema differs from the expected schema")
    models = []
    for m in header["models"]:
        models.append(FactorModel(
            class_index=m["class_index"],
            kinds=tuple(FeatureKind(k) for k in m["kinds"]),
            means=arr(m["means"]), scales=arr(m["scales"]), live=arr(m["live"]).astype(bool),
            origin=arr(m["origin"]),
            category_codes=tuple(None if t is None else {tok: int(code) for tok, code in t}
                                 for t in m["category_codes"]),
            loadings=arr(m["loadings"]), eigenvalues=arr(m["eigenvalues"]),
            relation=RelationMatrix(arr(m["relation"]), tuple(tuple(r) for r in m["relation_kinds"])),
        ))
    r = header["reps"]
    reps = RepresentativeSet(
        arr(r["indices"]), arr(r["raw_weights"]), arr(r["normalized_weights"]),
        tuple(zip(arr(r["ranking_index"]).tolist(), arr(r["ranking_weight"]).tolist())))
    densities = tuple(tuple(
        MmgDensity(arr(d["gamma"]), arr(d["mu"]), arr(d["sigma"]), arr(d["alpha"]),
                   d["rep_index"], d["class_index"], tuple(d["flags"]))
        for d in row) for row in header["densities"])
    modes = tuple(ModeAssignment(tuple(ma["modes"]), float(arr(ma["score"])[0]), ma["evaluations"],
                                 ma["center_evaluations"], tuple(ma["flags"])) for ma in header["modes"])
    return TrustCore(schema, header["n_classes"], tuple(models), reps, densities, modes, header["metadata"])


# -------------------------------------------------------------------- reports

@dataclass(frozen=True, eq=False)
class ExplanationReport:
    sample_ids: np.ndarray
    rep_factors: np.ndarray            # factor index of each representative
    weights: np.ndarray
    per_class: np.ndarray              # C x n x k log-likelihood matrices
    winners: np.ndarray                # n x k, class with the larger per-rep log-likelihood
    totals: np.ndarray                 # n x C
    labels: np.ndarray
    primary_labels: np.ndarray | None
    split: np.ndarray                  # n, representatives disagree among themselves
    dissent: tuple[tuple[int, ...], ...]   # per sample, rep slots whose winner != final label

    def to_dict(self) -> dict:
        return {
            "samples": self.sample_ids.tolist(),
            "representatives": [{"slot": s + 1, "factor": int(f) + 1, "weight": float(w)}
                                for s, (f, w) in enumerate(zip(self.rep_factors, self.weights))],
            "log_likelihood": {f"class_{c + 1}": self.per_class[c].tolist()
                               for c in range(self.per_class.shape[0])},
            "winners": self.winners.tolist(),
            "totals": self.totals.tolist(),
            "labels": self.labels.tolist(),
            "primary_labels": None if self.primary_labels is None else self.primary_labels.tolist(),
            "split": self.split.tolist(),
            "dissenting_representatives": [[s + 1 for s in d] for d in self.dissent],
        }

    def to_text(self) -> str:
        k = len(self.rep_factors)
        out = []
        rep_head = [f"R{s + 1}" for s in range(k)]

        def table(title, head, rows):
            cells = [["sample"] + head] + [[f"#{int(i)}"] + r for i, r in zip(self.sample_ids, rows)]
            widths = [max(len(r[j]) for r in cells) for j in range(len(head) + 1)]
            out.append(title)
            out.extend("  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in cells)
            out.append("")

        for c in range(self.per_class.shape[0]):
            table(f"Log-likelihood per representative, class {c + 1}", rep_head,
                  [[f"{v:.4f}" for v in row] for row in self.per_class[c]])
        table("Winning class per representative", rep_head,
              [[str(int(v)) for v in row] for row in self.winners])
        table("Weighted total log-likelihood",
              [f"class {c + 1}" for c in range(self.totals.shape[1])] + ["label"],
              [[f"{v:.4f}" for v in row] + [str(int(lab))] for row, lab in zip(self.totals, self.labels)])
        notes = []
        for sid, d, s in zip(self.sample_ids, self.dissent, self.split):
            if d:
                notes.append(f"sample #{int(sid)}: representative(s) {', '.join(f'R{x + 1}' for x in d)} "
                             f"favour another class" + (" (representatives split)" if s else ""))
        if notes:
            out.append("Disagreeing representatives")
            out.extend(notes)
            out.append("")
        return "\n".join(out)


def report(core: TrustCore, batch: BatchExplanation, indices=None) -> ExplanationReport:
    idx = np.arange(len(batch)) if indices is None else np.asarray(indices, dtype=np.intp)
    per_rep = batch.per_rep[idx]                       # n x C x k
    winners = np.argmax(per_rep, axis=1) + 1           # n x k
    labels = batch.labels[idx]
    split = np.array([len(set(row.tolist())) > 1 for row in winners], dtype=bool)
    dissent = tuple(tuple(int(s) for s in np.flatnonzero(row != lab)) for row, lab in zip(winners, labels))
    return ExplanationReport(
        sample_ids=idx, rep_factors=core.reps.indices.copy(),
        weights=core.reps.normalized_weights.copy(),
        per_class=np.transpose(per_rep, (1, 0, 2)).copy(),
        winners=winners, totals=batch.totals[idx].copy(), labels=labels.copy(),
        primary_labels=None if batch.primary_labels is None else batch.primary_labels[idx].copy(),
        split=split, dissent=dissent)


# --------------------------------------------------------------------- curves

@dataclass(frozen=True, eq=False)
class Curve:
    class_index: int
    x: np.ndarray
    pdf: np.ndarray
    density: MmgDensity


@dataclass(frozen=True, eq=False)
class CurveExport:
    rep_slot: int
    factor_index: int
    curves: tuple[Curve, ...]

    def to_text(self, c: int) -> str:
        cur = self.curves[c]
        d = cur.density
        lines = [f"# representative {self.rep_slot + 1} (factor {self.factor_index + 1}), class {cur.class_index}",
                 "# component weight mean std"]
        lines += [f"# {m + 1} {g!r} {mu!r} {s!r}"
                  for m, (g, mu, s) in enumerate(zip(d.gamma.tolist(), d.mu.tolist(), d.sigma.tolist()))]
        lines += [f"{x!r} {p!r}" for x, p in zip(cur.x.tolist(), cur.pdf.tolist())]
        return "\n".join(lines) + "\n"


def export_curves(core: TrustCore, slot: int, n_points: int = 512, span: float = 10.0) -> CurveExport:
    """Sample every class's density of representative ``slot`` (0-based).

    The grid covers every component's mean +- ``span`` standard deviations
    and is refined around each component so the samples integrate well.
    """
    if not 0 <= slot < core.k:
        raise IndexError(f"representative slot {slot} out of range 0..{core.k - 1}")
    row = core.densities[slot]
    mus = np.concatenate([d.mu for d in row])
    sig = np.concatenate([d.sigma for d in row])
    lo, hi = float(np.min(mus - span * sig)), float(np.max(mus + span * sig))
    pieces = [np.linspace(lo, hi, n_points)]
    pieces += [np.linspace(m - span * s, m + span * s, 401) for m, s in zip(mus, sig)]
    x = np.unique(np.concatenate(pieces))
    # drop points that differ from their predecessor only by rounding
    keep = np.r_[True, np.diff(x) > 1e-9 * max(1.0, hi - lo)]
    x = x[keep]
    curves = tuple(Curve(d.class_index, x, d.pdf(x), d) for d in row)
    return CurveExport(slot, int(core.reps.indices[slot]), curves)


def machine_metadata() -> dict:
    return {"python": platform.python_version(), "machine": platform.machine(),
            "system": platform.system(), "numpy": np.__version__}
