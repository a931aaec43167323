"""CSV loaders for manifests, feature stores, annotations; design-matrix assembly.

File formats (all UTF-8 CSV with a mandatory header):

  manifest.csv          image_id,label,split
                        label in {private,public,""}; split in {train,val,test,""}
  privacy_features.csv  image_id,adult,racy,medical,spoofed,violent,
                        people_prob,people_count,outdoor_prob
                        sensitivity cells: level tokens, decimals in [0,1], or empty
  deep_features.csv     first line "#source_tag=<tag>,dim=<D>", then
                        image_id,v0,...,v{D-1}
  annotations.csv       image_id,assessor_id,vote
"""

from __future__ import annotations

import csv
import enum
import logging
import random
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateId,
    MissingFeatures,
    MissingLabel,
    ParseError,
    UnknownLabel,
    UnknownVote,
)
from .features import (
    DeepFeatureVector,
    FeatureGroup,
    Likelihood,
    PrivacyFeatureVector,
    PrivacyLabel,
    assemble_features,
)

log = logging.getLogger(__name__)


class Split(enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class FiveClassVote(enum.Enum):
    CLEARLY_PRIVATE = "CLEARLY_PRIVATE"
    PRIVATE = "PRIVATE"
    UNDECIDABLE = "UNDECIDABLE"
    PUBLIC = "PUBLIC"
    CLEARLY_PUBLIC = "CLEARLY_PUBLIC"


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    binary_label: PrivacyLabel | None = None
    split: Split | None = None


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    votes: tuple[FiveClassVote, ...]
    assessor_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.votes:
            raise ValueError("votes must be non-empty")
        if self.assessor_ids is not None and len(self.assessor_ids) != len(self.votes):
            raise ValueError("assessor_ids must align with votes")


@dataclass
class Dataset:
    """Immutable-after-construction join of manifest, features and votes."""

    records: list[ImageRecord]
    privacy_features: dict[str, PrivacyFeatureVector] = field(default_factory=dict)
    deep_features: dict[str, dict[str, DeepFeatureVector]] = field(default_factory=dict)
    annotations: dict[str, AnnotationRecord] = field(default_factory=dict)

    def __post_init__(self):
        known = {r.image_id for r in self.records}
        for name, store in (
            ("privacy_features", self.privacy_features),
            ("annotations", self.annotations),
        ):
            for image_id in store:
                if image_id not in known:
                    log.warning("%s id %r not in manifest; ignored in matrices", name, image_id)
        for tag, per_image in self.deep_features.items():
            dims = {v.dim for v in per_image.values()}
            if len(dims) > 1:
                raise DimensionMismatch(f"source_tag {tag!r} mixes dims {sorted(dims)}")
            for image_id in per_image:
                if image_id not in known:
                    log.warning("deep store %r id %r not in manifest; ignored", tag, image_id)

    def record_map(self) -> dict[str, ImageRecord]:
        return {r.image_id: r for r in self.records}


_LABEL_TOKENS = {"private": PrivacyLabel.PRIVATE, "public": PrivacyLabel.PUBLIC}
_SPLIT_TOKENS = {s.value: s for s in Split}


def _open_csv(path):
    try:
        return open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise ParseError(str(exc), path=path) from exc


def load_manifest(path) -> list[ImageRecord]:
    records: list[ImageRecord] = []
    seen: set[str] = set()
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["image_id", "label", "split"]:
            raise ParseError("expected header image_id,label,split", path=path, line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", path=path, line=lineno)
            image_id, label_tok, split_tok = (c.strip() for c in row)
            if not image_id:
                raise ParseError("empty image_id", path=path, line=lineno)
            if image_id in seen:
                raise DuplicateId(image_id)
            seen.add(image_id)
            label = None
            if label_tok:
                if label_tok.lower() not in _LABEL_TOKENS:
                    raise UnknownLabel(label_tok)
                label = _LABEL_TOKENS[label_tok.lower()]
            split = None
            if split_tok:
                if split_tok.lower() not in _SPLIT_TOKENS:
                    raise ParseError(f"unknown split {split_tok!r}", path=path, line=lineno)
                split = _SPLIT_TOKENS[split_tok.lower()]
            records.append(ImageRecord(image_id, label, split))
    return records


_PRIVACY_HEADER = [
    "image_id", "adult", "racy", "medical", "spoofed", "violent",
    "people_prob", "people_count", "outdoor_prob",
]


def _parse_sensitivity_cell(cell: str, path, lineno) -> Likelihood | None:
    cell = cell.strip()
    if not cell:
        return None
    try:
        return Likelihood.from_token(cell)
    except KeyError:
        pass
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"bad sensitivity cell {cell!r}", path=path, line=lineno)
    if not 0.0 <= value <= 1.0:
        raise ParseError(f"sensitivity value {value} out of [0,1]", path=path, line=lineno)
    # numeric cells snap to the nearest of the five levels
    return Likelihood(int(round(value * 4)))


def load_privacy_store(path) -> dict[str, PrivacyFeatureVector]:
    store: dict[str, PrivacyFeatureVector] = {}
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != _PRIVACY_HEADER:
            raise ParseError(
                "expected header " + ",".join(_PRIVACY_HEADER), path=path, line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 9:
                raise ParseError(f"expected 9 fields, got {len(row)}", path=path, line=lineno)
            image_id = row[0].strip()
            try:
                vec = PrivacyFeatureVector(
                    *(_parse_sensitivity_cell(c, path, lineno) for c in row[1:6]),
                    people_prob=float(row[6]),
                    people_count=int(row[7]),
                    outdoor_prob=float(row[8]),
                )
            except (ValueError, TypeError) as exc:
                raise ParseError(str(exc), path=path, line=lineno) from exc
            if image_id in store:
                raise DuplicateId(image_id)
            store[image_id] = vec
    return store


def load_deep_store(path) -> tuple[str, dict[str, DeepFeatureVector]]:
    """Returns (source_tag, map image_id -> vector)."""
    with _open_csv(path) as fh:
        first = fh.readline().strip()
        if not first.startswith("#"):
            raise ParseError("missing #source_tag=...,dim=... header", path=path, line=1)
        try:
            fields = dict(part.split("=", 1) for part in first.lstrip("#").split(","))
            source_tag = fields["source_tag"].strip()
            dim = int(fields["dim"])
        except (KeyError, ValueError) as exc:
            raise ParseError(f"bad deep-store header {first!r}", path=path, line=1) from exc
        if dim <= 0:
            raise ParseError("dim must be positive", path=path, line=1)
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0].strip() != "image_id":
            raise ParseError("expected column header starting with image_id", path=path, line=2)
        store: dict[str, DeepFeatureVector] = {}
        for lineno, row in enumerate(reader, start=3):
            if not row:
                continue
            image_id = row[0].strip()
            if len(row) - 1 != dim:
                raise DimensionMismatch(
                    f"image {image_id!r} has {len(row) - 1} values, header declares dim={dim}"
                )
            try:
                values = np.array([float(c) for c in row[1:]], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(str(exc), path=path, line=lineno) from exc
            if image_id in store:
                raise DuplicateId(image_id)
            store[image_id] = DeepFeatureVector(values=values, source_tag=source_tag)
    return source_tag, store


def load_feature_store(path, kind: str):
    """Dispatch on store kind: 'privacy' or 'deep'."""
    if kind == "privacy":
        return load_privacy_store(path)
    if kind == "deep":
        return load_deep_store(path)
    raise ValueError(f"unknown store kind {kind!r}")


def load_annotations(path) -> dict[str, AnnotationRecord]:
    votes: dict[str, list[FiveClassVote]] = {}
    assessors: dict[str, list[str]] = {}
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["image_id", "assessor_id", "vote"]:
            raise ParseError("expected header image_id,assessor_id,vote", path=path, line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", path=path, line=lineno)
            image_id, assessor_id, vote_tok = (c.strip() for c in row)
            try:
                vote = FiveClassVote[vote_tok.upper()]
            except KeyError:
                raise UnknownVote(vote_tok)
            votes.setdefault(image_id, []).append(vote)
            assessors.setdefault(image_id, []).append(assessor_id)
    return {
        image_id: AnnotationRecord(image_id, tuple(vs), tuple(assessors[image_id]))
        for image_id, vs in votes.items()
    }


def assign_splits(
    records: list[ImageRecord],
    seed: int,
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2),
) -> list[ImageRecord]:
    """Seeded random train/val/test assignment for manifests lacking a split column.

    Only records without a split are assigned; existing assignments are kept.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    unassigned = [i for i, r in enumerate(records) if r.split is None]
    order = list(unassigned)
    random.Random(seed).shuffle(order)
    n = len(order)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    new_split = {}
    for rank, idx in enumerate(order):
        if rank < n_train:
            new_split[idx] = Split.TRAIN
        elif rank < n_train + n_val:
            new_split[idx] = Split.VAL
        else:
            new_split[idx] = Split.TEST
    return [
        ImageRecord(r.image_id, r.binary_label, new_split.get(i, r.split))
        for i, r in enumerate(records)
    ]


def write_manifest(path, records: list[ImageRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "label", "split"])
        for r in records:
            writer.writerow([
                r.image_id,
                r.binary_label.value if r.binary_label else "",
                r.split.value if r.split else "",
            ])


def build_design_matrix(
    ds: Dataset,
    split: Split | None,
    groups: set[FeatureGroup],
    source_tag: str | None = None,
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Aligned (X, y, image_ids) in manifest order; Private=1, Public=0."""
    need_privacy = bool(groups & {FeatureGroup.SENS, FeatureGroup.PEOPLE, FeatureGroup.OUT})
    need_places = FeatureGroup.PLACES in groups
    need_deep = FeatureGroup.DEEP in groups
    if need_deep and source_tag is None:
        raise ValueError("source_tag required when the DEEP group is selected")

    places_store = ds.deep_features.get("places365", {}) if need_places else {}
    deep_store = ds.deep_features.get(source_tag, {}) if need_deep else {}

    rows, labels, ids = [], [], []
    for record in ds.records:
        if split is not None and record.split is not split:
            continue
        if record.binary_label is None:
            raise MissingLabel(record.image_id)
        privacy = ds.privacy_features.get(record.image_id)
        if need_privacy and privacy is None:
            raise MissingFeatures(record.image_id, "privacy")
        places = places_store.get(record.image_id)
        if need_places and places is None:
            raise MissingFeatures(record.image_id, FeatureGroup.PLACES.name)
        deep = deep_store.get(record.image_id)
        if need_deep and deep is None:
            raise MissingFeatures(record.image_id, FeatureGroup.DEEP.name)
        rows.append(assemble_features(privacy, deep, groups, places=places))
        labels.append(1.0 if record.binary_label is PrivacyLabel.PRIVATE else 0.0)
        ids.append(record.image_id)

    if not rows:
        return np.empty((0, 0)), np.empty(0), []
    return np.vstack(rows), np.array(labels, dtype=np.float64), ids
