"""Experiment configuration: a sectioned key-value file (INI syntax) validated
before any work starts. See README for the full schema.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .classifiers import TrainConfig
from .data_io import (
    Dataset,
    Split,
    assign_splits,
    load_annotations,
    load_deep_store,
    load_manifest,
    load_privacy_store,
    write_manifest,
)
from .errors import ConfigError
from .features import FeatureGroup

_GROUP_TOKENS = {g.value: g for g in FeatureGroup}


def parse_groups(token: str) -> set[FeatureGroup]:
    groups = set()
    for part in token.split(","):
        part = part.strip().lower()
        if not part:
            continue
        if part not in _GROUP_TOKENS:
            raise ConfigError(f"unknown feature group {part!r} "
                              f"(expected one of {sorted(_GROUP_TOKENS)})")
        groups.add(_GROUP_TOKENS[part])
    if not groups:
        raise ConfigError("feature groups must be a nonempty subset")
    return groups


@dataclass
class DataPaths:
    manifest: Path
    privacy_features: Path | None = None
    deep_features: tuple[Path, ...] = ()
    annotations: Path | None = None
    detections: Path | None = None
    scenes: Path | None = None
    categories: Path | None = None
    io_map: Path | None = None
    image_refs: Path | None = None


@dataclass
class AblationRow:
    row_id: str
    groups: set[FeatureGroup]
    source_tag: str | None = None


@dataclass
class ExperimentConfig:
    data: DataPaths
    groups: set[FeatureGroup] = field(default_factory=lambda: {
        FeatureGroup.SENS, FeatureGroup.PEOPLE, FeatureGroup.OUT,
    })
    source_tag: str | None = None
    classifier_kind: str = "logreg"
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden_dims: tuple[int, int, int] = (16, 16, 8)
    split_fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)
    out_dir: Path = Path("out")
    seed: int = 0
    workers: int = 4
    person_conf_threshold: float = 0.5
    safesearch_max_attempts: int = 5
    safesearch_backoff_base: float = 1.0
    safesearch_rps: float = 5.0
    ablation_rows: list[AblationRow] = field(default_factory=list)

    # fixed offsets deriving per-component seeds from the top-level seed
    SPLIT_SEED_OFFSET = 1
    TRAIN_SEED_OFFSET = 2

    @property
    def split_seed(self) -> int:
        return self.seed + self.SPLIT_SEED_OFFSET

    @property
    def train_seed(self) -> int:
        return self.seed + self.TRAIN_SEED_OFFSET


def _get_path(section, key, base: Path, required=False) -> Path | None:
    raw = section.get(key, "").strip()
    if not raw:
        if required:
            raise ConfigError(f"missing required key {key!r} in [{section.name}]")
        return None
    path = (base / raw).resolve() if not Path(raw).is_absolute() else Path(raw)
    if not path.exists():
        raise ConfigError(f"{key} = {raw!r} does not exist")
    return path


def load_config(path, seed: int | None = None, out_dir=None, workers: int | None = None) -> ExperimentConfig:
    """Parse and validate a config file; CLI flags may override seed/out/workers."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if "data" not in parser:
        raise ConfigError("config must have a [data] section")
    base = path.parent

    data_sec = parser["data"]
    deep_raw = data_sec.get("deep_features", "").strip()
    deep_paths = []
    for part in deep_raw.split(","):
        part = part.strip()
        if part:
            p = (base / part).resolve() if not Path(part).is_absolute() else Path(part)
            if not p.exists():
                raise ConfigError(f"deep_features path {part!r} does not exist")
            deep_paths.append(p)
    data = DataPaths(
        manifest=_get_path(data_sec, "manifest", base, required=True),
        privacy_features=_get_path(data_sec, "privacy_features", base),
        deep_features=tuple(deep_paths),
        annotations=_get_path(data_sec, "annotations", base),
        detections=_get_path(data_sec, "detections", base),
        scenes=_get_path(data_sec, "scenes", base),
        categories=_get_path(data_sec, "categories", base),
        io_map=_get_path(data_sec, "io_map", base),
        image_refs=_get_path(data_sec, "image_refs", base),
    )

    cfg = ExperimentConfig(data=data)

    if "features" in parser:
        sec = parser["features"]
        if sec.get("groups", "").strip():
            cfg.groups = parse_groups(sec["groups"])
        tag = sec.get("source_tag", "").strip()
        cfg.source_tag = tag or None

    if "train" in parser:
        sec = parser["train"]
        cfg.classifier_kind = sec.get("kind", "logreg").strip().lower()
        if cfg.classifier_kind not in ("logreg", "mlp"):
            raise ConfigError(f"unknown classifier kind {cfg.classifier_kind!r}")
        try:
            batch_raw = sec.get("batch_size", "").strip()
            patience_raw = sec.get("early_stop_patience", "").strip()
            cfg.train = TrainConfig(
                learning_rate=float(sec.get("learning_rate", "0.1")),
                epochs=int(sec.get("epochs", "200")),
                l2_penalty=float(sec.get("l2_penalty", "0.0")),
                batch_size=int(batch_raw) if batch_raw else None,
                class_weighting=sec.get("class_weighting", "balanced").strip(),
                early_stop_patience=int(patience_raw) if patience_raw else None,
            )
            dims_raw = sec.get("hidden_dims", "").strip()
            if dims_raw:
                dims = tuple(int(d) for d in dims_raw.split(","))
                if len(dims) != 3:
                    raise ConfigError("hidden_dims must list exactly three widths")
                cfg.hidden_dims = dims
        except ValueError as exc:
            raise ConfigError(f"bad [train] value: {exc}") from exc

    if "split" in parser:
        raw = parser["split"].get("fractions", "").strip()
        if raw:
            try:
                fr = tuple(float(x) for x in raw.split(","))
            except ValueError as exc:
                raise ConfigError(f"bad split fractions: {exc}") from exc
            if len(fr) != 3 or abs(sum(fr) - 1.0) > 1e-9:
                raise ConfigError("split fractions must be three numbers summing to 1")
            cfg.split_fractions = fr

    if "extract" in parser:
        sec = parser["extract"]
        try:
            if sec.get("person_conf_threshold", "").strip():
                cfg.person_conf_threshold = float(sec["person_conf_threshold"])
            if sec.get("safesearch_max_attempts", "").strip():
                cfg.safesearch_max_attempts = int(sec["safesearch_max_attempts"])
            if sec.get("safesearch_backoff_base", "").strip():
                cfg.safesearch_backoff_base = float(sec["safesearch_backoff_base"])
            if sec.get("safesearch_rps", "").strip():
                cfg.safesearch_rps = float(sec["safesearch_rps"])
        except ValueError as exc:
            raise ConfigError(f"bad [extract] value: {exc}") from exc

    if "output" in parser and parser["output"].get("dir", "").strip():
        cfg.out_dir = Path(parser["output"]["dir"])
    if "experiment" in parser and parser["experiment"].get("seed", "").strip():
        cfg.seed = int(parser["experiment"]["seed"])

    if "ablation" in parser:
        row_ids = [r.strip() for r in parser["ablation"].get("rows", "").split(",") if r.strip()]
        if len(set(row_ids)) != len(row_ids):
            raise ConfigError("duplicate ablation row ids")
        for row_id in row_ids:
            sec_name = f"ablation.{row_id}"
            if sec_name not in parser:
                raise ConfigError(f"missing section [{sec_name}]")
            sec = parser[sec_name]
            tag = sec.get("source_tag", "").strip()
            cfg.ablation_rows.append(AblationRow(
                row_id=row_id,
                groups=parse_groups(sec.get("groups", "")),
                source_tag=tag or None,
            ))

    # CLI overrides
    if seed is not None:
        cfg.seed = seed
    if out_dir is not None:
        cfg.out_dir = Path(out_dir)
    if workers is not None:
        cfg.workers = workers
    return cfg


def load_dataset(cfg: ExperimentConfig, require_splits: bool = False) -> Dataset:
    """Load all configured stores and join them into a Dataset.

    When the manifest lacks splits and require_splits is set, a seeded random
    split is generated and written to out_dir/manifest_with_splits.csv.
    """
    records = load_manifest(cfg.data.manifest)
    if require_splits and any(r.split is None for r in records):
        records = assign_splits(records, cfg.split_seed, cfg.split_fractions)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        write_manifest(cfg.out_dir / "manifest_with_splits.csv", records)

    privacy = {}
    if cfg.data.privacy_features is not None:
        privacy = load_privacy_store(cfg.data.privacy_features)
    deep: dict[str, dict] = {}
    for p in cfg.data.deep_features:
        tag, store = load_deep_store(p)
        if tag in deep:
            raise ConfigError(f"duplicate deep-feature source_tag {tag!r}")
        deep[tag] = store
    annotations = {}
    if cfg.data.annotations is not None:
        annotations = load_annotations(cfg.data.annotations)
    return Dataset(
        records=records,
        privacy_features=privacy,
        deep_features=deep,
        annotations=annotations,
    )


SPLIT_BY_NAME = {s.value: s for s in Split}
