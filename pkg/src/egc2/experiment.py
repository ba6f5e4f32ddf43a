"""Batch experiment driver with content-addressed, write-once run dirs.

A run is described by a JSON spec document. The driver executes the
requested pipeline (ingest -> optional compression -> training or
cross-validation -> optional attribution/attack stages -> report) and
writes every artifact under a directory named by the hash of the spec,
so identical specs land in the same place and a re-run must reproduce
the stored metrics bit-for-bit.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from pathlib import Path

import numpy as np

from egc2 import __version__
from egc2.attack import (
    AttackConfig,
    PipelineVariant,
    attack_dataset,
    defense_evaluation,
)
from egc2.attribution import dataset_eci
from egc2.centrality import CENTRALITY_KINDS
from egc2.compression import CompressionConfig, compress_dataset
from egc2.graphs import (
    GraphDataset,
    load_dataset_cache,
    load_tu_dataset,
    save_dataset_cache,
    write_tu_dataset,
)
from egc2.model import (
    ModelConfig,
    cross_validate,
    derive_seed,
    stratified_folds,
    train,
)
from egc2.reports import ExperimentReport, canonical_json, content_hash
from egc2.synthetic import PROFILES, make_benchmark

log = logging.getLogger(__name__)

SPEC_VERSION = 1
EXPERIMENT_KINDS = ("pipeline", "compression-sweep", "defense-grid")
ALLOWED_KEYS = {
    "version", "experiment", "name", "dataset", "seed", "model",
    "compress", "train", "eci", "attack", "sweep", "defense", "output_root",
}


class SpecError(ValueError):
    """The experiment spec violates the documented schema."""


def validate_spec(spec: dict) -> None:
    unknown = sorted(set(spec) - ALLOWED_KEYS)
    if unknown:
        raise SpecError(f"unknown spec keys: {', '.join(unknown)}")
    if spec.get("version") != SPEC_VERSION:
        raise SpecError(f"spec version must be {SPEC_VERSION}")
    kind = spec.get("experiment", "pipeline")
    if kind not in EXPERIMENT_KINDS:
        raise SpecError(f"experiment must be one of {EXPERIMENT_KINDS}")
    if "dataset" not in spec:
        raise SpecError("missing required key: dataset")
    dataset = spec["dataset"]
    if not any(k in dataset for k in ("profile", "directory", "cache")):
        raise SpecError("dataset needs one of: profile, directory, cache")
    if "compress" in spec:
        comp = spec["compress"]
        if comp.get("kind") not in CENTRALITY_KINDS:
            raise SpecError(f"compress.kind must be one of {CENTRALITY_KINDS}")
        if not 0.0 <= float(comp.get("gamma", -1)) < 1.0:
            raise SpecError("compress.gamma must be in [0, 1)")
    if kind == "compression-sweep" and "sweep" not in spec:
        raise SpecError("compression-sweep requires a sweep section")
    if kind == "defense-grid" and "defense" not in spec:
        raise SpecError("defense-grid requires a defense section")


def load_spec_dataset(dataset_spec: dict) -> GraphDataset:
    if "profile" in dataset_spec:
        return make_benchmark(dataset_spec["profile"],
                              seed=int(dataset_spec.get("seed", 0)))
    if "directory" in dataset_spec:
        return load_tu_dataset(dataset_spec["directory"],
                               dataset_spec["name"])
    return load_dataset_cache(dataset_spec["cache"])


def _model_config(dataset: GraphDataset, spec: dict) -> ModelConfig:
    overrides = dict(spec.get("model", {}))
    overrides.setdefault("seed", int(spec.get("seed", 0)))
    return ModelConfig.for_dataset(dataset, **overrides)


def split_dataset(dataset: GraphDataset, seed: int):
    """Deterministic 70/10/20 split built from stratified tenths."""
    folds = stratified_folds(dataset.labels(), 10, seed)
    test_idx = np.concatenate([folds[0], folds[1]])
    val_idx = folds[2]
    train_idx = np.concatenate(folds[3:])
    pick = lambda idx: [dataset.graphs[int(k)] for k in idx]
    return pick(train_idx), pick(val_idx), pick(test_idx)


def timing_probe(dataset: GraphDataset, config: ModelConfig, gammas,
                 kind: str = "c", epochs: int = 20) -> list[dict]:
    """Median per-epoch training seconds for each compression ratio.

    Every ratio trains from the same seeds for the same number of
    epochs; the padded size follows each compressed dataset.
    """
    rows = []
    for gamma in gammas:
        if gamma > 0:
            sub, _ = compress_dataset(dataset, CompressionConfig(kind, gamma))
        else:
            sub = dataset
        cfg = config.with_overrides(
            n0=sub.max_nodes(), max_epochs=epochs, patience=epochs)
        train_graphs, val_graphs, _ = split_dataset(sub, cfg.seed)
        model = train(train_graphs, val_graphs, cfg)
        rows.append({
            "gamma": float(gamma),
            "n0": cfg.n0,
            "epochs": len(model.training_log),
            "median_epoch_seconds": float(np.median(
                [e["seconds"] for e in model.training_log])),
        })
    return rows


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _run_pipeline(spec: dict, dataset: GraphDataset, run_dir: Path,
                  report: ExperimentReport) -> None:
    seed = int(spec.get("seed", 0))
    if "compress" in spec:
        comp = CompressionConfig(spec["compress"]["kind"],
                                 float(spec["compress"]["gamma"]))
        dataset, comp_report = compress_dataset(dataset, comp)
        report.compression = comp_report.to_dict()
    config = _model_config(dataset, spec)

    train_spec = spec.get("train", {})
    folds = int(train_spec.get("folds", 0))
    if folds:
        cv = cross_validate(dataset, config, folds=folds)
        report.metrics.update(cv.metrics)
        report.per_fold = cv.per_fold
        _write_csv(run_dir / "folds.csv",
                   ["fold", "test_accuracy", "epochs", "seconds"],
                   [[f["fold"], f["test_accuracy"], f["epochs"],
                     f["seconds"]] for f in cv.per_fold])

    needs_model = "eci" in spec or "attack" in spec
    if needs_model:
        train_graphs, val_graphs, test_graphs = split_dataset(dataset, seed)
        model = train(train_graphs, val_graphs, config)
        model.save(run_dir / "model.npz")
        report.outputs["checkpoint"] = str(run_dir / "model.npz")
        report.metrics["split_test_accuracy"] = model.accuracy(test_graphs)
        _write_csv(run_dir / "training_log.csv",
                   ["epoch", "train_loss", "val_loss", "val_accuracy",
                    "seconds"],
                   [[e["epoch"], e["train_loss"], e["val_loss"],
                     e["val_accuracy"], e["seconds"]]
                    for e in model.training_log])

        attack_results = None
        if "attack" in spec:
            ratio = float(spec["attack"]["ratio"])
            attack_results, asr = attack_dataset(model, test_graphs,
                                                 AttackConfig(ratio))
            report.metrics["asr"] = asr
            adv = GraphDataset(
                name=f"{dataset.name}-adv",
                graphs=[r.adversarial for r in attack_results],
                num_classes=dataset.num_classes,
                feature_dim=dataset.feature_dim)
            adv_dir = run_dir / "adversarial"
            write_tu_dataset(adv, adv_dir)
            manifest = {
                str(r.graph_id): {"flips": [list(f) for f in r.flipped],
                                  "status": r.status}
                for r in attack_results
            }
            (run_dir / "attack_manifest.json").write_text(
                json.dumps(manifest, indent=2))
            report.outputs["adversarial_dir"] = str(adv_dir)

        if "eci" in spec:
            eci_spec = spec["eci"]
            kinds = eci_spec.get("kinds", list(CENTRALITY_KINDS))
            aggregate = eci_spec.get("aggregate", "per_graph")
            clean = dataset_eci(model, test_graphs, kinds, aggregate)
            report.metrics["eci_clean"] = {
                k: v["mean"] for k, v in clean.kinds.items()}
            rows = [[k, v["mean"], len(v["per_graph"])]
                    for k, v in clean.kinds.items()]
            if attack_results is not None:
                attacked_clean = [g for g, r in zip(test_graphs, attack_results)
                                  if r.flipped]
                attacked_adv = [r.adversarial for r in attack_results
                                if r.flipped]
                adv_eci = dataset_eci(model, attacked_adv, kinds, aggregate)
                clean_sub = dataset_eci(model, attacked_clean, kinds, aggregate)
                report.metrics["eci_adv"] = {
                    k: v["mean"] for k, v in adv_eci.kinds.items()}
                report.metrics["eci_delta"] = {
                    k: clean_sub.kinds[k]["mean"] - adv_eci.kinds[k]["mean"]
                    for k in adv_eci.kinds}
            _write_csv(run_dir / "fig5_eci.csv", ["kind", "mean_eci", "graphs"],
                       rows)
            report.outputs["eci_csv"] = str(run_dir / "fig5_eci.csv")


def _run_compression_sweep(spec: dict, dataset: GraphDataset, run_dir: Path,
                           report: ExperimentReport) -> None:
    sweep = spec["sweep"]
    gammas = [float(g) for g in sweep["gammas"]]
    kind = sweep.get("kind", "c")
    epochs = int(sweep.get("epochs", 20))
    config = _model_config(dataset, spec)

    rows, timing_rows = [], []
    for gamma in gammas:
        sub = dataset
        if gamma > 0:
            sub, _ = compress_dataset(dataset, CompressionConfig(kind, gamma))
        cfg = config.with_overrides(n0=sub.max_nodes(), max_epochs=epochs,
                                    patience=epochs)
        train_graphs, val_graphs, test_graphs = split_dataset(sub, cfg.seed)
        model = train(train_graphs, val_graphs, cfg)
        median_seconds = float(np.median(
            [e["seconds"] for e in model.training_log]))
        # wall time stays out of metrics so replay equality can hold
        rows.append({"gamma": gamma, "accuracy": model.accuracy(test_graphs),
                     "n0": cfg.n0})
        timing_rows.append({"gamma": gamma,
                            "median_epoch_seconds": median_seconds})
    report.metrics["sweep"] = rows
    report.timing["sweep"] = timing_rows
    _write_csv(run_dir / "fig7_sweep.csv",
               ["gamma", "accuracy", "median_epoch_seconds", "n0"],
               [[r["gamma"], r["accuracy"], t["median_epoch_seconds"],
                 r["n0"]] for r, t in zip(rows, timing_rows)])
    report.outputs["sweep_csv"] = str(run_dir / "fig7_sweep.csv")


def _run_defense_grid(spec: dict, dataset: GraphDataset, run_dir: Path,
                      report: ExperimentReport) -> None:
    defense = spec["defense"]
    ratios = [float(r) for r in defense.get("ratios", [0.3])]
    gamma = float(defense.get("gamma", 0.3))
    kind = defense.get("kind", "c")
    seed = int(spec.get("seed", 0))
    comp = CompressionConfig(kind, gamma)

    compressed, _ = compress_dataset(dataset, comp)
    config = _model_config(dataset, spec)
    variants: dict[str, PipelineVariant] = {}
    for name, readout, source in (("base", "mean", dataset),
                                  ("egc", "feature", dataset),
                                  ("base-com", "mean", compressed),
                                  ("egc-com", "feature", compressed)):
        cfg = config.with_overrides(
            readout_mode=readout,
            seed=derive_seed(seed, "variant", name))
        train_graphs, val_graphs, _ = split_dataset(source, cfg.seed)
        model = train(train_graphs, val_graphs, cfg)
        variants[name] = PipelineVariant(
            name, model, comp if name.endswith("-com") else None)

    _, _, test_graphs = split_dataset(dataset, seed)
    grid_report = defense_evaluation(
        variants, test_graphs, ratios,
        sources={"base-com": "base", "egc-com": "egc"})
    report.metrics.update(grid_report.metrics)

    rows = []
    for ratio_key, payload in grid_report.metrics["grids"].items():
        for name, value in payload["asr"].items():
            rows.append([ratio_key, name,
                         "" if value is None else value])
    _write_csv(run_dir / "table3_asr.csv", ["ratio", "variant", "asr"], rows)
    report.outputs["asr_csv"] = str(run_dir / "table3_asr.csv")


def run_experiment(spec_path_or_dict, output_root=None) -> ExperimentReport:
    """Execute an experiment spec; artifacts land in a content-hash dir.

    Re-running an already completed spec recomputes everything and
    verifies the stored report is reproduced; the stored artifacts are
    never rewritten.
    """
    if isinstance(spec_path_or_dict, (str, Path)):
        spec = json.loads(Path(spec_path_or_dict).read_text())
    else:
        spec = json.loads(canonical_json(spec_path_or_dict))
    validate_spec(spec)

    kind = spec.get("experiment", "pipeline")
    root = Path(output_root or spec.get("output_root", "runs"))
    digest = content_hash(spec)[:12]
    run_dir = root / f"{spec.get('name', kind)}-{digest}"
    existing = run_dir / "report.json"
    previous = ExperimentReport.load(existing) if existing.exists() else None
    run_dir.mkdir(parents=True, exist_ok=True)

    report = ExperimentReport(
        kind=kind,
        config={"spec": spec, "spec_hash": content_hash(spec),
                "package_version": __version__,
                "numpy_version": np.__version__},
    )
    try:
        dataset = load_spec_dataset(spec["dataset"])
        report.metrics["dataset"] = {
            "name": dataset.name, "graphs": len(dataset),
            "classes": dataset.num_classes, "max_nodes": dataset.max_nodes(),
        }
        if previous is None:
            save_dataset_cache(dataset, run_dir / "dataset.json", fmt="json")
        started = time.perf_counter()
        if kind == "pipeline":
            _run_pipeline(spec, dataset, run_dir, report)
        elif kind == "compression-sweep":
            _run_compression_sweep(spec, dataset, run_dir, report)
        else:
            _run_defense_grid(spec, dataset, run_dir, report)
        report.timing["total_seconds"] = time.perf_counter() - started
    except Exception as exc:  # stage failure -> partial report with marker
        report.failure = f"{type(exc).__name__}: {exc}"
        (run_dir / "report.partial.json").write_text(
            json.dumps(report.to_dict(), indent=2))
        raise

    if previous is not None:
        if previous.metrics != report.metrics:
            raise RuntimeError(
                f"re-run of {digest} did not reproduce stored metrics")
        log.info("run %s verified against stored report", digest)
        return previous
    report.outputs["run_dir"] = str(run_dir)
    report.save(existing)
    return report
