"""Command-line front end: extract, train, evaluate, ablate, analyze.

Exit codes: 0 success, 2 partial failure, 64 usage error, 78 configuration
error, 1 internal error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, extractors
from .classifiers import (
    FeatureSpec,
    load_model,
    predict_label,
    save_model,
    train_logreg,
    train_mlp,
)
from .config import ExperimentConfig, load_config, load_dataset
from .data_io import Dataset, Split, build_design_matrix, load_deep_store
from .errors import (
    ConfigError,
    EmptyDataset,
    FeatureSpecMismatch,
    MissingFeatures,
    MissingGroupData,
    PrivlensError,
)
from .features import FeatureGroup, PrivacyLabel
from .metrics import MetricsReport

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 2
EXIT_USAGE = 64
EXIT_CONFIG = 78
EXIT_INTERNAL = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="privlens", description=__doc__)
    parser.add_argument("--config", required=True, help="experiment config file")
    parser.add_argument("--seed", type=int, default=None, help="top-level seed override")
    parser.add_argument("--out-dir", default=None, help="output directory override")
    parser.add_argument("--workers", type=int, default=None, help="extraction worker count")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("extract", help="produce privacy_features.csv from configured sources")
    sub.add_parser("train", help="train the configured classifier")
    ev = sub.add_parser("evaluate", help="evaluate a saved model on the test split")
    ev.add_argument("model_path", help="model JSON produced by train")
    sub.add_parser("ablate", help="run the configured feature-subset ablation")
    sub.add_parser("analyze", help="run annotation / feature analyses")
    return parser


# --- shared helpers ----------------------------------------------------------

def _labels_from_binary(y: np.ndarray) -> list[PrivacyLabel]:
    return [PrivacyLabel.PRIVATE if v == 1.0 else PrivacyLabel.PUBLIC for v in y]


def _train_one(cfg: ExperimentConfig, ds: Dataset, groups, source_tag):
    """Train on the train split, report metrics on train and val splits."""
    X_train, y_train, _ = build_design_matrix(ds, Split.TRAIN, groups, source_tag)
    if X_train.size == 0:
        raise ConfigError("train split is empty")
    X_val, y_val, _ = build_design_matrix(ds, Split.VAL, groups, source_tag)
    has_val = X_val.size > 0

    train_cfg = dataclasses.replace(cfg.train, seed=cfg.train_seed)
    kwargs = {}
    if has_val and train_cfg.early_stop_patience is not None:
        kwargs = {"X_val": X_val, "y_val": y_val}
    if cfg.classifier_kind == "mlp":
        model, trace = train_mlp(X_train, y_train, train_cfg, list(cfg.hidden_dims), **kwargs)
    else:
        model, trace = train_logreg(X_train, y_train, train_cfg, **kwargs)
    model.feature_spec = FeatureSpec(
        groups=tuple(sorted(groups, key=lambda g: g.value)), source_tag=source_tag
    )

    reports = {}
    for name, X, y in (("train", X_train, y_train), ("val", X_val, y_val)):
        if X.size == 0:
            continue
        pred = predict_label(model, X)
        reports[name] = MetricsReport.from_labels(_labels_from_binary(y), pred)
    return model, trace, reports


def _write_trace(path, trace):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for i, loss in enumerate(trace):
            writer.writerow([i, repr(loss)])


def _evaluate_model(model, ds: Dataset, split: Split) -> MetricsReport:
    groups = set(model.feature_spec.groups)
    try:
        X, y, _ = build_design_matrix(ds, split, groups, model.feature_spec.source_tag)
    except (MissingFeatures, MissingGroupData) as exc:
        raise FeatureSpecMismatch(str(exc)) from exc
    if X.size == 0:
        raise FeatureSpecMismatch(f"no labeled images in split {split.value!r}")
    if X.shape[1] != model.standardizer.dim:
        raise FeatureSpecMismatch(
            f"dataset yields {X.shape[1]} features, model expects {model.standardizer.dim}"
        )
    pred = predict_label(model, X)
    return MetricsReport.from_labels(_labels_from_binary(y), pred)


# --- subcommands -------------------------------------------------------------

def cmd_extract(cfg: ExperimentConfig) -> int:
    records = load_dataset(cfg).records
    image_refs = {}
    if cfg.data.image_refs is not None:
        with open(cfg.data.image_refs, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            image_refs = {row[0].strip(): row[1].strip() for row in reader if row}

    client = None
    try:
        client = extractors.SafeSearchClient.from_env(
            max_attempts=cfg.safesearch_max_attempts,
            backoff_base=cfg.safesearch_backoff_base,
            requests_per_second=cfg.safesearch_rps,
        )
    except ValueError:
        log.warning("no SafeSearch endpoint configured; sensitivity fields will be empty")

    detections = None
    if cfg.data.detections is not None:
        detections = extractors.load_detections(cfg.data.detections)
    scenes = categories = io_map = None
    if cfg.data.scenes is not None:
        if cfg.data.io_map is None:
            raise ConfigError("scenes configured without io_map")
        tag, store = load_deep_store(cfg.data.scenes)
        scenes = {image_id: v.values for image_id, v in store.items()}
        io_map = extractors.load_io_map(cfg.data.io_map)
        if cfg.data.categories is not None:
            categories = extractors.load_categories(cfg.data.categories)
        else:
            categories = tuple(sorted(io_map))
    sources = extractors.ExtractionSources(
        safe_search=client,
        image_refs=image_refs,
        detections=detections,
        scenes=scenes,
        categories=categories,
        io_map=io_map,
        person_conf_threshold=cfg.person_conf_threshold,
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = cfg.out_dir / "privacy_features.csv"
    report = extractors.run_extraction(
        records, sources, cfg.out_dir / "safesearch_cache", out_path, workers=cfg.workers
    )
    analysis.write_json(cfg.out_dir / "extraction_report.json", report.to_dict())
    print(f"wrote {report.n_complete}/{report.n_images} rows to {out_path}")
    if report.failures:
        for image_id, err in sorted(report.failures.items()):
            print(f"FAILED {image_id}: {err}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig) -> int:
    ds = load_dataset(cfg, require_splits=True)
    model, trace, reports = _train_one(cfg, ds, cfg.groups, cfg.source_tag)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    save_model(model, cfg.out_dir / "model.json")
    _write_trace(cfg.out_dir / "loss_trace.csv", trace)
    train_log = {
        "classifier_kind": cfg.classifier_kind,
        "groups": sorted(g.value for g in cfg.groups),
        "source_tag": cfg.source_tag,
        "seed": cfg.seed,
        "derived_seeds": {"split": cfg.split_seed, "train": cfg.train_seed},
        "train_config": {
            "learning_rate": cfg.train.learning_rate,
            "epochs": cfg.train.epochs,
            "l2_penalty": cfg.train.l2_penalty,
            "batch_size": cfg.train.batch_size,
            "class_weighting": cfg.train.class_weighting,
            "early_stop_patience": cfg.train.early_stop_patience,
        },
        "hidden_dims": list(cfg.hidden_dims) if cfg.classifier_kind == "mlp" else None,
        "metrics": {name: r.to_dict() for name, r in reports.items()},
    }
    analysis.write_json(cfg.out_dir / "training_log.json", train_log)
    for name, report in reports.items():
        print(report.table_row(name))
    print(f"model written to {cfg.out_dir / 'model.json'}")
    return EXIT_OK


def cmd_evaluate(cfg: ExperimentConfig, model_path) -> int:
    ds = load_dataset(cfg, require_splits=True)
    model = load_model(model_path)
    report = _evaluate_model(model, ds, Split.TEST)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    analysis.write_json(cfg.out_dir / "test_metrics.json", report.to_dict())
    print(report.table_row("test"))
    return EXIT_OK


_TABLE_GROUPS = (
    FeatureGroup.SENS, FeatureGroup.PEOPLE, FeatureGroup.OUT,
    FeatureGroup.PLACES, FeatureGroup.DEEP,
)


def cmd_ablate(cfg: ExperimentConfig) -> int:
    if not cfg.ablation_rows:
        raise ConfigError("config has no [ablation] rows")
    ds = load_dataset(cfg, require_splits=True)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)

    results = []
    failures = 0
    for row in cfg.ablation_rows:
        try:
            model, _, _ = _train_one(cfg, ds, row.groups, row.source_tag)
            report = _evaluate_model(model, ds, Split.TEST)
            results.append((row, report, None))
            save_model(model, cfg.out_dir / f"model_{row.row_id}.json")
        except PrivlensError as exc:
            failures += 1
            results.append((row, None, f"{type(exc).__name__}: {exc}"))
            log.error("ablation row %s failed: %s", row.row_id, exc)

    header = ["row", "Sens", "People", "Out", "Places", "Deep", "BA", "F1"]
    csv_rows = []
    lines = ["  ".join(f"{h:<8s}" for h in header)]
    for row, report, err in results:
        marks = ["x" if g in row.groups else "" for g in _TABLE_GROUPS]
        if row.source_tag and FeatureGroup.DEEP in row.groups:
            marks[4] = row.source_tag
        if report is not None:
            ba = f"{report.balanced_accuracy:.4f}" if report.balanced_accuracy is not None else "n/a"
            f1v = f"{report.f1:.4f}"
        else:
            ba = f1v = "ERROR"
        cells = [row.row_id, *marks, ba, f1v]
        csv_rows.append(cells)
        lines.append("  ".join(f"{c:<8s}" for c in cells))
    table = "\n".join(lines) + "\n"
    (cfg.out_dir / "ablation_table.txt").write_text(table, "utf-8")
    analysis.write_csv(cfg.out_dir / "ablation_results.csv", header, csv_rows)
    print(table, end="")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_analyze(cfg: ExperimentConfig) -> int:
    ds = load_dataset(cfg)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    skipped = []

    have_votes = cfg.data.annotations is not None
    have_features = bool(ds.privacy_features)
    have_labels = any(r.binary_label is not None for r in ds.records)

    if have_votes:
        if not ds.annotations:
            raise EmptyDataset("annotations file contains no votes")
        ids = analysis.controversial_image_ids(ds)
        analysis.write_json(out / "controversial.json", {"image_ids": ids})
        analysis.write_csv(out / "controversial.csv", ["image_id"], [[i] for i in ids])
        if have_features:
            try:
                breakdown = analysis.controversial_people_breakdown(ds)
                analysis.write_json(out / "people_breakdown.json", breakdown)
                analysis.write_csv(
                    out / "people_breakdown.csv", ["group", "fraction"],
                    sorted(breakdown.items()),
                )
            except analysis.EmptyControversialSet:
                skipped.append("people_breakdown (no controversial images)")
        else:
            skipped.append("people_breakdown (no privacy features)")
    else:
        skipped.append("controversial analyses (no annotations configured)")

    if have_features and have_labels:
        curves = {}
        for loc in (None, "indoor", "outdoor"):
            try:
                curves[loc or "all"] = analysis.cumulative_private_by_people(ds, loc)
            except EmptyDataset:
                pass
        analysis.write_json(out / "cumulative_private.json", curves)
        analysis.write_csv(
            out / "cumulative_private.csv", ["location", "max_people", "p_private"],
            [(loc, k, p) for loc, curve in sorted(curves.items()) for k, p in curve],
        )

        dist = analysis.sensitivity_label_distribution(ds)
        analysis.write_json(out / "sensitivity_distribution.json", dist)
        analysis.write_csv(
            out / "sensitivity_distribution.csv",
            ["class", "level", "label", "count"],
            [(c, lvl, lab, n)
             for c, per_level in sorted(dist["counts"].items())
             for lvl, per_label in per_level.items()
             for lab, n in sorted(per_label.items())],
        )

        conditional = {
            c: analysis.private_prob_given_sensitivity(ds, c)
            for c in analysis.SENSITIVITY_CLASSES
        }
        analysis.write_json(out / "conditional_private.json", conditional)
        analysis.write_csv(
            out / "conditional_private.csv",
            ["class", "level", "p_private", "support"],
            [(c, lvl, p, n) for c, rows in sorted(conditional.items()) for lvl, p, n in rows],
        )

        groups = analysis.group_privacy_probabilities(ds)
        analysis.write_json(out / "group_probabilities.json", groups)
        analysis.write_csv(
            out / "group_probabilities.csv",
            ["has_people", "is_sensitive", "is_outdoor", "share", "p_private", "support"],
            [[g["has_people"], g["is_sensitive"], g["is_outdoor"],
              g["share"], g["p_private"], g["support"]] for g in groups],
        )
    else:
        skipped.append("feature-based analyses (need privacy features and labels)")

    for item in skipped:
        log.warning("skipped: %s", item)
        print(f"skipped: {item}", file=sys.stderr)
    print(f"analysis outputs written to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out_dir,
                          workers=args.workers)
        if args.command == "extract":
            return cmd_extract(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.model_path)
        if args.command == "ablate":
            return cmd_ablate(cfg)
        if args.command == "analyze":
            return cmd_analyze(cfg)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PrivlensError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
