"""Command-line entry point: ``trust <command> [options]``.

Every option can also be set through an environment variable named
``TRUST_`` plus the upper-cased option name (``--zone-max`` becomes
``TRUST_ZONE_MAX``); explicit flags win. All artifacts land under
``--out`` next to a ``manifest.json`` describing the run.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bench import DEFAULT_SIZES, run_bench
from .data import (DataError, LabeledDataset, Schema, load_csv, load_labeled_csv, load_predictions,
                   load_schema, save_predictions, save_schema, split_indices, write_csv)
from .explainer import (BuildError, CoreFormatError, SchemaMismatchError, build_core, explain_batch,
                        export_curves, load_core, report, save_core)
from .metrics import ConfusionMatrix, format_table, summary
from .modesearch import SearchZone
from .primary_model import TrainConfig, fit_reference
from .reps import DEFAULT_BINS
from .synth import SpecError, generate_synthetic, separable_spec, two_gaussians_spec

log = logging.getLogger("trustxai")

SUITES = {"separable": separable_spec, "two-gaussians": two_gaussians_spec}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


@dataclass(frozen=True)
class RunConfig:
    command: str
    k: int = 2
    bins: int = DEFAULT_BINS
    zone_min: int = 1
    zone_max: int = 20
    subzone: int = 5
    seed: int = 0
    ratio: float = 0.8
    positive_class: int | None = None
    data: str | None = None
    schema: str | None = None
    predictions: str | None = None
    core: str | None = None
    out: str = "trust-out"

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError(f"--k must be at least 1, got {self.k}")
        if self.bins < 2:
            raise ConfigError(f"--bins must be at least 2, got {self.bins}")
        if not 1 <= self.zone_min <= self.zone_max:
            raise ConfigError(f"zone must satisfy 1 <= min <= max, got {self.zone_min}..{self.zone_max}")
        if self.subzone < 1:
            raise ConfigError(f"--subzone must be at least 1, got {self.subzone}")
        if not 0.0 < self.ratio < 1.0:
            raise ConfigError(f"--ratio must lie strictly between 0 and 1, got {self.ratio}")
        if self.positive_class is not None and self.positive_class < 1:
            raise ConfigError("--positive-class is a 1-based class index")
        needs = {"build": ("data", "schema"), "explain": ("data", "schema", "core"),
                 "evaluate": (), "modes": ("core",), "curves": ("core",)}
        for name in needs.get(self.command, ()):
            if getattr(self, name) is None:
                raise ConfigError(f"{self.command} needs --{name.replace('_', '-')}")
        if self.command in needs:
            for name in ("data", "schema", "predictions", "core"):
                path = getattr(self, name)
                if path is not None and not Path(path).exists():
                    raise ConfigError(f"--{name}: no such file {path}")

    def zone(self, n_classes: int) -> SearchZone:
        return SearchZone.square(n_classes, hi=self.zone_max, lo=self.zone_min, subzone_edge=self.subzone)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """Output directory plus the bookkeeping for its manifest."""

    def __init__(self, config: RunConfig, extra: dict):
        self.config = config
        self.extra = extra
        self.root = Path(config.out)
        self.root.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.started = time.time()

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.root / name

    def write_json(self, name: str, obj) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return p

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        return p

    def finish(self) -> None:
        manifest = {
            "command": self.config.command,
            "config": asdict(self.config),
            "options": self.extra,
            "package_version": __version__,
            "outputs": {name: _sha256(self.root / name) for name in sorted(set(self.outputs))},
            "started_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(self.started)),
            "seconds": time.time() - self.started,
        }
        (self.root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                                encoding="utf-8")


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (StageError, ConfigError):
        raise
    except BuildError as exc:
        raise StageError(f"{name}/{exc.stage}", str(exc.cause)) from exc
    except SchemaMismatchError as exc:
        raise StageError("schema", str(exc)) from exc
    except (DataError, CoreFormatError, SpecError, ValueError, OSError, IndexError) as exc:
        raise StageError(name, str(exc)) from exc


def _load_labeled(cfg: RunConfig, with_predictions: bool) -> tuple[Schema, LabeledDataset | None, object]:
    schema, _ = _stage("schema", load_schema, cfg.schema)
    if schema.label_column is not None:
        ld = _stage("data", load_labeled_csv, cfg.data, schema)
        return schema, ld, ld.data
    if with_predictions and cfg.predictions:
        ld = _stage("data", load_labeled_csv, cfg.data, schema, cfg.predictions)
        return schema, ld, ld.data
    return schema, None, _stage("data", load_csv, cfg.data, schema)


# ------------------------------------------------------------------ commands

def cmd_synth(cfg: RunConfig, args, run: Run) -> int:
    if args.spec:
        try:
            spec = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise StageError("synth", f"cannot read spec {args.spec}: {exc}") from None
    else:
        spec = SUITES[args.suite]()
    ld = _stage("synth", generate_synthetic, spec, cfg.seed, args.n)
    write_csv(ld, run.path("data.csv"))
    save_schema(ld.data.schema, run.path("schema.json"))
    print(f"wrote {len(ld)} rows, {ld.n_classes} classes to {run.root / 'data.csv'}")
    return 0


def cmd_build(cfg: RunConfig, args, run: Run) -> int:
    schema, ld, data = _load_labeled(cfg, with_predictions=False)
    if ld is None and cfg.predictions is None:
        raise StageError("data", "schema has no label_column and no --predictions given")
    truth = ld.labels if ld is not None else None
    n_classes = ld.n_classes if ld is not None else 0
    if cfg.predictions:
        predicted = _stage("predictions", load_predictions, cfg.predictions, data.n_rows, n_classes)
        n_classes = max(n_classes, int(predicted.max()), 2)
        strata = truth if truth is not None else predicted
        train_idx, test_idx = _stage("split", split_indices, strata, n_classes, cfg.ratio, cfg.seed)
    else:
        # no black box supplied: train the reference classifier on the training rows
        train_idx, test_idx = _stage("split", split_indices, truth, n_classes, cfg.ratio, cfg.seed)
        model = _stage("reference", fit_reference, ld.take(train_idx), TrainConfig(seed=cfg.seed))
        predicted = model.predict(data)
        save_predictions(predicted, run.path("predictions.csv"))
    labeled = _stage("partition", LabeledDataset, data.take(train_idx), predicted[train_idx], n_classes)
    zone = _stage("config", cfg.zone, labeled.n_classes)
    timings: list = []
    core = _stage("build", build_core, labeled, cfg.k, cfg.bins, zone, cfg.seed,
                  not args.full_search, timings)
    save_core(core, run.path("core.trust"))
    run.write_json("split.json", {"ratio": cfg.ratio, "seed": cfg.seed,
                                  "train": train_idx.tolist(), "test": test_idx.tolist()})
    run.write_json("build.json", {
        "representatives": [{"slot": s + 1, "factor": int(f) + 1, "weight": float(w)}
                            for s, (f, w) in enumerate(zip(core.reps.indices, core.reps.normalized_weights))],
        "modes": [ma.to_dict() for ma in core.modes],
        "n_train": len(labeled), "n_classes": core.n_classes,
    })
    run.extra["timings"] = [{"stage": s, "seconds": t} for s, t, _ in timings]
    print(f"built core with k={core.k} on {len(labeled)} rows -> {run.root / 'core.trust'}")
    return 0


def cmd_explain(cfg: RunConfig, args, run: Run) -> int:
    schema, ld, data = _load_labeled(cfg, with_predictions=False)
    core = _stage("core", load_core, cfg.core)
    rows = np.arange(data.n_rows)
    if args.split == "test":
        strata = ld.labels if ld is not None else None
        if strata is None:
            raise StageError("split", "--split test needs a label column to reproduce the split")
        _, rows = _stage("split", split_indices, strata, core.n_classes, cfg.ratio, cfg.seed)
    primary = None
    pred_path = cfg.predictions
    if not pred_path and (run.root / "predictions.csv").exists():
        # written by `build` when it trained the reference model itself
        pred_path = str(run.root / "predictions.csv")
    if pred_path:
        primary = _stage("predictions", load_predictions, pred_path, data.n_rows, core.n_classes)[rows]
    samples = data.take(rows)
    batch = _stage("explain", explain_batch, core, samples, primary, cfg.positive_class)
    run.write_json("explanations.json", {
        "rows": rows.tolist(),
        "labels": batch.labels.tolist(),
        "margins": batch.margins.tolist(),
        "totals": batch.totals.tolist(),
        "per_rep": batch.per_rep.tolist(),
        "unseen": batch.unseen.tolist(),
        "primary_labels": None if primary is None else primary.tolist(),
        "truth": None if ld is None else ld.labels[rows].tolist(),
    })
    save_predictions(batch.labels, run.path("explained_labels.csv"))
    n_show = min(args.report_samples, len(batch))
    rep = report(core, batch, np.arange(n_show))
    doc = rep.to_dict()
    doc["samples"] = rows[:n_show].tolist()
    run.write_json("report.json", doc)
    run.write_text("report.txt", rep.to_text())
    fid = batch.fidelity()
    if fid is not None:
        run.write_json("fidelity.json", fid)
        print(f"explained {len(batch)} rows; fidelity MCC {fid['mcc']:.4f}, accuracy {fid['accuracy']:.4f}")
    else:
        print(f"explained {len(batch)} rows")
    return 0


def cmd_evaluate(cfg: RunConfig, args, run: Run) -> int:
    path = Path(args.explanations or Path(cfg.out) / "explanations.json")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise StageError("evaluate", f"cannot read explanations {path}: {exc}") from None
    assigned = np.asarray(doc["labels"], dtype=np.int64)
    n_classes = int(np.asarray(doc["totals"]).shape[1]) if assigned.size else 2
    positive = cfg.positive_class or 1
    rows = {}
    reference = None
    if cfg.predictions:
        reference = _stage("predictions", load_predictions, cfg.predictions, None, n_classes)
        if len(reference) != len(assigned):
            reference = reference[np.asarray(doc["rows"], dtype=np.intp)]
    elif doc.get("primary_labels") is not None:
        reference = np.asarray(doc["primary_labels"], dtype=np.int64)
    if reference is not None:
        cm = _stage("evaluate", ConfusionMatrix.from_labels, reference, assigned, n_classes, positive)
        rows["fidelity"] = summary(cm)
    if doc.get("truth") is not None:
        truth = np.asarray(doc["truth"], dtype=np.int64)
        rows["explainer_vs_truth"] = summary(ConfusionMatrix.from_labels(truth, assigned, n_classes, positive))
        if reference is not None:
            rows["primary_vs_truth"] = summary(ConfusionMatrix.from_labels(truth, reference, n_classes, positive))
    if not rows:
        raise StageError("evaluate", "no reference labels: give --predictions or explain with them")
    run.write_json("metrics.json", rows)
    print(format_table(rows))
    return 0


def cmd_modes(cfg: RunConfig, args, run: Run) -> int:
    core = _stage("core", load_core, cfg.core)
    out = [{"slot": s + 1, "factor": int(f) + 1, **ma.to_dict()}
           for s, (f, ma) in enumerate(zip(core.reps.indices, core.modes))]
    run.write_json("modes.json", out)
    for row in out:
        print(f"R{row['slot']} (factor {row['factor']}): modes {row['modes']} score {row['score']:.4f}")
    return 0


def cmd_curves(cfg: RunConfig, args, run: Run) -> int:
    core = _stage("core", load_core, cfg.core)
    slots = range(core.k) if args.slot is None else [args.slot - 1]
    for s in slots:
        exp = _stage("curves", export_curves, core, s, args.points)
        for c in range(len(exp.curves)):
            run.write_text(f"curve_r{s + 1}_c{c + 1}.txt", exp.to_text(c))
    print(f"wrote curves for {len(list(slots))} representative(s) to {run.root}")
    return 0


def cmd_bench(cfg: RunConfig, args, run: Run) -> int:
    sizes = tuple(sorted(int(s) for s in args.sizes.split(",")))
    if not sizes or min(sizes) < 1:
        raise ConfigError("--sizes must be positive integers")
    result = _stage("bench", run_bench, sizes, cfg.k, args.n_train, cfg.seed, cfg.zone_max, cfg.subzone,
                    args.baseline_samples, args.perturbations, args.repeats)
    run.write_json("bench.json", result)
    for r in result["records"]:
        print(f"{r['stage']:>16}  N={r['n']:>7}  {r['seconds']:.4f}s  evals={r['candidate_evaluations']}")
    print(f"explain-time R^2 {result['explain_r2']:.4f}; baseline speedup {result['baseline']['speedup']:.1f}x")
    return 0


COMMANDS = {"synth": cmd_synth, "build": cmd_build, "explain": cmd_explain, "evaluate": cmd_evaluate,
            "modes": cmd_modes, "curves": cmd_curves, "bench": cmd_bench}


# -------------------------------------------------------------------- parsing

def _env(name: str, default, cast=str, environ=None):
    environ = os.environ if environ is None else environ
    raw = environ.get("TRUST_" + name.upper().replace("-", "_"))
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"TRUST_{name.upper().replace('-', '_')}={raw!r} is not a valid {cast.__name__}") from None


def build_parser(environ=None) -> argparse.ArgumentParser:
    e = lambda name, default, cast=str: _env(name, default, cast, environ)  # noqa: E731
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--k", type=int, default=e("k", 2, int))
    common.add_argument("--bins", type=int, default=e("bins", DEFAULT_BINS, int))
    common.add_argument("--zone-min", type=int, default=e("zone-min", 1, int))
    common.add_argument("--zone-max", type=int, default=e("zone-max", 20, int))
    common.add_argument("--subzone", type=int, default=e("subzone", 5, int))
    common.add_argument("--seed", type=int, default=e("seed", 0, int))
    common.add_argument("--ratio", type=float, default=e("ratio", 0.8, float))
    common.add_argument("--positive-class", type=int, default=e("positive-class", None, int))
    for name in ("data", "schema", "predictions", "core"):
        common.add_argument(f"--{name}", default=e(name, None))
    common.add_argument("--out", default=e("out", "trust-out"))
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="trust", description="Statistical explainer for black-box classifiers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", parents=[common], help="generate a labeled synthetic CSV")
    p.add_argument("--suite", choices=sorted(SUITES), default="separable")
    p.add_argument("--spec", help="JSON mixture spec (overrides --suite)")
    p.add_argument("--n", type=int, default=None)
    p = sub.add_parser("build", parents=[common], help="fit an explainer core")
    p.add_argument("--full-search", action="store_true", help="exhaustive mode search instead of the fast one")
    p = sub.add_parser("explain", parents=[common], help="explain rows with a saved core")
    p.add_argument("--split", choices=("all", "test"), default="all")
    p.add_argument("--report-samples", type=int, default=6)
    p = sub.add_parser("evaluate", parents=[common], help="metrics of explained labels")
    p.add_argument("--explanations")
    sub.add_parser("modes", parents=[common], help="mode assignments stored in a core")
    p = sub.add_parser("curves", parents=[common], help="sampled density curves")
    p.add_argument("--slot", type=int, default=None, help="1-based representative slot (default: all)")
    p.add_argument("--points", type=int, default=512)
    p = sub.add_parser("bench", parents=[common], help="timing harness")
    p.add_argument("--sizes", default=",".join(str(s) for s in DEFAULT_SIZES))
    p.add_argument("--n-train", type=int, default=10000)
    p.add_argument("--baseline-samples", type=int, default=1000)
    p.add_argument("--perturbations", type=int, default=5000)
    p.add_argument("--repeats", type=int, default=3)
    return parser


def config_from_args(args) -> RunConfig:
    return RunConfig(command=args.command, k=args.k, bins=args.bins, zone_min=args.zone_min,
                     zone_max=args.zone_max, subzone=args.subzone, seed=args.seed, ratio=args.ratio,
                     positive_class=args.positive_class, data=args.data, schema=args.schema,
                     predictions=args.predictions, core=args.core, out=args.out)


_CONFIG_KEYS = set(RunConfig.__dataclass_fields__) | {"verbose"}


def main(argv=None, environ=None) -> int:
    try:
        parser = build_parser(environ)
    except ConfigError as exc:
        print(f"trust: error [config]: {exc}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        cfg.validate()
        extra = {k: v for k, v in vars(args).items() if k not in _CONFIG_KEYS}
        run = Run(cfg, extra)
        status = COMMANDS[cfg.command](cfg, args, run)
        run.finish()
        return status
    except ConfigError as exc:
        print(f"trust: error [config]: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"trust: error [{exc.stage}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
