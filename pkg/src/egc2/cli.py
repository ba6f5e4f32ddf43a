"""Command-line entry points.

    egc2 synth       write a synthetic benchmark corpus as TU files
    egc2 ingest      load a TU directory into a dataset cache
    egc2 centrality  per-edge importance scores as CSV
    egc2 compress    centrality-guided compression of a TU directory
    egc2 train       train / cross-validate a classifier
    egc2 eci         edge contribution-importance report for a checkpoint
    egc2 attack      gradient edge-flip attack against a checkpoint
    egc2 experiment  run a JSON experiment spec
    egc2 report      pretty-print a stored experiment report
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from egc2.attack import AttackConfig, attack_dataset
from egc2.attribution import dataset_eci
from egc2.centrality import CENTRALITY_KINDS, edge_importance
from egc2.compression import CompressionConfig, compress_dataset
from egc2.graphs import (
    GraphDataset,
    canonical_edges,
    load_dataset_cache,
    load_tu_dataset,
    save_dataset_cache,
    write_tu_dataset,
)
from egc2.model import EgcModel, ModelConfig, cross_validate, train
from egc2.experiment import run_experiment, split_dataset
from egc2.reports import ExperimentReport
from egc2.synthetic import PROFILES, make_benchmark

log = logging.getLogger("egc2")


def _load_dataset(args) -> GraphDataset:
    if getattr(args, "cache", None):
        return load_dataset_cache(args.cache)
    return load_tu_dataset(args.data_dir, args.dataset)


def _add_dataset_args(parser, require=True):
    group = parser.add_mutually_exclusive_group(required=require)
    group.add_argument("--cache", help="dataset cache file from `egc2 ingest`")
    group.add_argument("--data-dir", help="TU-format dataset directory")
    parser.add_argument("--dataset", help="dataset name inside --data-dir")


def cmd_synth(args) -> int:
    ds = make_benchmark(args.profile, seed=args.seed)
    write_tu_dataset(ds, args.out)
    print(f"wrote {len(ds)} graphs ({ds.name}) to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    ds = load_tu_dataset(args.dir, args.name)
    save_dataset_cache(ds, args.out, fmt=args.cache_format)
    print(f"{ds.name}: {len(ds)} graphs, {ds.num_classes} classes, "
          f"feature dim {ds.feature_dim}, max nodes {ds.max_nodes()}"
          + (f", skipped {ds.num_skipped_empty} empty"
             if ds.num_skipped_empty else ""))
    return 0


def cmd_centrality(args) -> int:
    ds = _load_dataset(args)
    writer = csv.writer(sys.stdout if args.out == "-"
                        else open(args.out, "w", newline=""))
    writer.writerow(["graph_id", "edge_i", "edge_j", "kind", "value"])
    for g in ds:
        scores = edge_importance(g, args.kind)
        for (i, j), value in zip(canonical_edges(g), scores.values):
            writer.writerow([g.id, i, j, args.kind, f"{value:.12g}"])
    return 0


def cmd_compress(args) -> int:
    ds = load_tu_dataset(args.in_dir, args.name)
    compressed, report = compress_dataset(
        ds, CompressionConfig(args.index, args.gamma))
    write_tu_dataset(compressed, args.out_dir)
    report_path = Path(args.report or Path(args.out_dir) / "compression.json")
    report_path.write_text(json.dumps(report.to_dict(), indent=2))
    print(f"edges {report.edges_before} -> {report.edges_after}, "
          f"nodes {report.nodes_before} -> {report.nodes_after}; "
          f"report at {report_path}")
    return 0


def cmd_train(args) -> int:
    ds = _load_dataset(args)
    if args.gamma > 0:
        if args.index == "none":
            raise SystemExit("--gamma needs --index")
        ds, _ = compress_dataset(ds, CompressionConfig(args.index, args.gamma))
    config = ModelConfig.for_dataset(
        ds, readout_mode=args.readout, hidden_dim=args.d,
        assign_ratio=args.r, feature_edge_ratio=args.k,
        learning_rate=args.lr, max_epochs=args.max_epochs,
        patience=args.patience, seed=args.seed)
    if args.folds > 1:
        report = cross_validate(ds, config, folds=args.folds)
        print(json.dumps(report.metrics, indent=2))
        if args.log:
            with open(args.log, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["fold", "test_accuracy", "epochs", "seconds"])
                for row in report.per_fold:
                    writer.writerow([row["fold"], row["test_accuracy"],
                                     row["epochs"], row["seconds"]])
        return 0
    train_graphs, val_graphs, test_graphs = split_dataset(ds, args.seed)
    model = train(train_graphs, val_graphs, config)
    print(f"test accuracy {model.accuracy(test_graphs):.4f} "
          f"({len(model.training_log)} epochs)")
    if args.checkpoint:
        model.save(args.checkpoint)
        print(f"checkpoint at {args.checkpoint}")
    if args.log:
        with open(args.log, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss",
                             "val_accuracy", "seconds"])
            for e in model.training_log:
                writer.writerow([e["epoch"], e["train_loss"], e["val_loss"],
                                 e["val_accuracy"], e["seconds"]])
    return 0


def cmd_eci(args) -> int:
    ds = _load_dataset(args)
    model = EgcModel.load(args.checkpoint)
    graphs = ds.graphs if args.all_graphs else split_dataset(ds, args.seed)[2]
    report = dataset_eci(model, graphs, kinds=args.kinds.split(","),
                         aggregate=args.aggregate)
    payload = report.to_dict()
    if args.out == "-":
        print(json.dumps(payload, indent=2))
    else:
        Path(args.out).write_text(json.dumps(payload, indent=2))
    return 0


def cmd_attack(args) -> int:
    ds = _load_dataset(args)
    model = EgcModel.load(args.checkpoint)
    graphs = split_dataset(ds, args.seed)[2]
    results, asr = attack_dataset(model, graphs, AttackConfig(args.ratio))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    adv = GraphDataset(name=f"{ds.name}-adv",
                       graphs=[r.adversarial for r in results],
                       num_classes=ds.num_classes,
                       feature_dim=ds.feature_dim)
    write_tu_dataset(adv, out)
    manifest = {str(r.graph_id): {"flips": [list(f) for f in r.flipped],
                                  "status": r.status}
                for r in results}
    (out / "attack_manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"ASR {'undefined' if asr is None else f'{asr:.4f}'} over "
          f"{sum(r.attacked for r in results)} attacked graphs; "
          f"adversarial TU files in {out}")
    return 0


def cmd_experiment(args) -> int:
    report = run_experiment(args.spec, output_root=args.output_root)
    print(json.dumps({"run_dir": report.outputs.get("run_dir"),
                      "metrics": report.metrics}, indent=2))
    return 0


def cmd_report(args) -> int:
    path = Path(args.path)
    if path.is_dir():
        path = path / "report.json"
    report = ExperimentReport.load(path)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="egc2",
        description="graph-classification robustness laboratory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic corpus in TU format")
    p.add_argument("--profile", choices=PROFILES, default="ptc-like")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("ingest", help="TU directory -> dataset cache")
    p.add_argument("--dir", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cache-format", choices=("json", "bin"), default="json")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("centrality", help="per-edge importance CSV")
    _add_dataset_args(p)
    p.add_argument("--kind", choices=CENTRALITY_KINDS, required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_centrality)

    p = sub.add_parser("compress", help="compress a TU dataset directory")
    p.add_argument("--index", choices=CENTRALITY_KINDS, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--report")
    p.set_defaults(fn=cmd_compress)

    p = sub.add_parser("train", help="train or cross-validate")
    _add_dataset_args(p)
    p.add_argument("--readout", choices=("feature", "mean", "max"),
                   default="feature")
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--r", type=float, default=0.25)
    p.add_argument("--k", type=float, default=0.25)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--index", choices=CENTRALITY_KINDS + ("none",),
                   default="none")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=1)
    p.add_argument("--max-epochs", type=int, default=1000)
    p.add_argument("--patience", type=int, default=100)
    p.add_argument("--checkpoint")
    p.add_argument("--log", help="per-epoch or per-fold CSV path")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eci", help="contribution-importance report")
    _add_dataset_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--kinds", default="cc,bc,ec,c,dc")
    p.add_argument("--aggregate", choices=("per_graph", "concatenate"),
                   default="per_graph")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--all-graphs", action="store_true")
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_eci)

    p = sub.add_parser("attack", help="gradient edge-flip attack")
    _add_dataset_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("experiment", help="run a JSON experiment spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--output-root")
    p.set_defaults(fn=cmd_experiment)

    p = sub.add_parser("report", help="pretty-print a stored report")
    p.add_argument("path")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
