"""Analyses of human privacy votes and interpretable features: controversial
images, people-count breakdowns, cumulative private probability, sensitivity
label distributions, conditional private probability, group probabilities.

Vote folding: the "clearly" variants merge into private/public; undecidable
votes count toward the assessor total but toward neither side.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

from .data_io import AnnotationRecord, Dataset, FiveClassVote
from .errors import EmptyControversialSet, EmptyDataset, TooFewVotes
from .features import (
    Likelihood,
    PrivacyFeatureVector,
    PrivacyLabel,
    SENSITIVITY_CLASSES,
)

#: Neither side may exceed this fraction of assessors for an image to count
#: as controversial.
CONTROVERSY_MAX_SHARE = 0.65

# Group-membership thresholds (configurable where used).
SENSITIVE_MIN_LEVEL = Likelihood.POSSIBLE
OUTDOOR_MIN_PROB = 0.5

_PRIVATE_VOTES = {FiveClassVote.CLEARLY_PRIVATE, FiveClassVote.PRIVATE}
_PUBLIC_VOTES = {FiveClassVote.CLEARLY_PUBLIC, FiveClassVote.PUBLIC}


@dataclass(frozen=True)
class VoteSummary:
    n_votes: int
    n_private: int
    n_public: int
    n_undecidable: int

    def __post_init__(self):
        if self.n_private + self.n_public + self.n_undecidable != self.n_votes:
            raise ValueError("vote counts must sum to n_votes")


def summarize_votes(record: AnnotationRecord) -> VoteSummary:
    n_private = sum(1 for v in record.votes if v in _PRIVATE_VOTES)
    n_public = sum(1 for v in record.votes if v in _PUBLIC_VOTES)
    n_undecidable = len(record.votes) - n_private - n_public
    return VoteSummary(len(record.votes), n_private, n_public, n_undecidable)


def is_controversial(summary: VoteSummary) -> bool:
    """Both sides voted, and neither side was picked by more than 65% of assessors."""
    if summary.n_votes < 2:
        raise TooFewVotes("controversy is defined only for 2+ assessors")
    if summary.n_private < 1 or summary.n_public < 1:
        return False
    return (
        summary.n_private / summary.n_votes <= CONTROVERSY_MAX_SHARE
        and summary.n_public / summary.n_votes <= CONTROVERSY_MAX_SHARE
    )


def controversial_image_ids(ds: Dataset) -> list[str]:
    """Manifest-ordered ids of controversial images (2+ votes only)."""
    out = []
    for record in ds.records:
        ann = ds.annotations.get(record.image_id)
        if ann is None or len(ann.votes) < 2:
            continue
        if is_controversial(summarize_votes(ann)):
            out.append(record.image_id)
    return out


def controversial_people_breakdown(ds: Dataset) -> dict[str, float]:
    """Fractions of controversial images with one / two-plus / no people."""
    ids = controversial_image_ids(ds)
    if not ids:
        raise EmptyControversialSet("no controversial images in dataset")
    counts = {"one_person": 0, "two_plus": 0, "none": 0}
    for image_id in ids:
        features = ds.privacy_features.get(image_id)
        if features is None:
            raise EmptyDataset(f"controversial image {image_id!r} lacks people_count")
        if features.people_count == 0:
            counts["none"] += 1
        elif features.people_count == 1:
            counts["one_person"] += 1
        else:
            counts["two_plus"] += 1
    total = len(ids)
    return {k: v / total for k, v in counts.items()}


@dataclass(frozen=True)
class GroupMembership:
    has_people: bool
    is_sensitive: bool
    is_outdoor: bool


def group_membership(
    features: PrivacyFeatureVector,
    sensitive_min_level: Likelihood = SENSITIVE_MIN_LEVEL,
    outdoor_min_prob: float = OUTDOOR_MIN_PROB,
) -> GroupMembership:
    sensitive = any(
        getattr(features, c) is not None and getattr(features, c) >= sensitive_min_level
        for c in SENSITIVITY_CLASSES
    )
    return GroupMembership(
        has_people=features.people_count >= 1,
        is_sensitive=sensitive,
        is_outdoor=features.outdoor_prob >= outdoor_min_prob,
    )


def _labeled_with_features(ds: Dataset):
    for record in ds.records:
        features = ds.privacy_features.get(record.image_id)
        if record.binary_label is None or features is None:
            continue
        yield record.image_id, record.binary_label, features


def cumulative_private_by_people(
    ds: Dataset, location: str | None = None
) -> list[tuple[int, float]]:
    """(k, P(private | people_count <= k)) for each k up to the max count.

    location: None, "indoor" or "outdoor"; filters on the outdoor threshold.
    k values with an empty conditioning set are omitted.
    """
    if location not in (None, "indoor", "outdoor"):
        raise ValueError(f"bad location filter {location!r}")
    points = []
    for _, label, features in _labeled_with_features(ds):
        outdoor = features.outdoor_prob >= OUTDOOR_MIN_PROB
        if location == "indoor" and outdoor:
            continue
        if location == "outdoor" and not outdoor:
            continue
        points.append((features.people_count, label is PrivacyLabel.PRIVATE))
    if not points:
        raise EmptyDataset("no labeled images with features after filtering")
    max_count = max(k for k, _ in points)
    curve = []
    for k in range(max_count + 1):
        subset = [private for count, private in points if count <= k]
        if not subset:
            continue
        curve.append((k, sum(subset) / len(subset)))
    return curve


def sensitivity_label_distribution(ds: Dataset) -> dict:
    """Count tensor class x level x label, plus per-(class,label) shares.

    Missing sensitivity fields are skipped (not counted as any level).
    """
    counts = {
        c: {lvl.name: {"private": 0, "public": 0} for lvl in Likelihood}
        for c in SENSITIVITY_CLASSES
    }
    for _, label, features in _labeled_with_features(ds):
        key = "private" if label is PrivacyLabel.PRIVATE else "public"
        for c in SENSITIVITY_CLASSES:
            level = getattr(features, c)
            if level is None:
                continue
            counts[c][level.name][key] += 1

    shares = {}
    for c in SENSITIVITY_CLASSES:
        shares[c] = {}
        for key in ("private", "public"):
            total = sum(counts[c][lvl.name][key] for lvl in Likelihood)
            shares[c][key] = {
                lvl.name: (counts[c][lvl.name][key] / total if total else 0.0)
                for lvl in Likelihood
            }
    return {"counts": counts, "shares": shares}


def private_prob_given_sensitivity(
    ds: Dataset, sensitivity_class: str
) -> list[tuple[str, float | None, int]]:
    """(level, P(private | class == level), support) per likelihood level.

    Zero-support levels report a null probability.
    """
    if sensitivity_class not in SENSITIVITY_CLASSES:
        raise ValueError(f"unknown sensitivity class {sensitivity_class!r}")
    tally = {lvl: [0, 0] for lvl in Likelihood}  # [n_private, n_total]
    for _, label, features in _labeled_with_features(ds):
        level = getattr(features, sensitivity_class)
        if level is None:
            continue
        tally[level][1] += 1
        if label is PrivacyLabel.PRIVATE:
            tally[level][0] += 1
    out = []
    for lvl in Likelihood:
        n_private, n_total = tally[lvl]
        prob = n_private / n_total if n_total else None
        out.append((lvl.name, prob, n_total))
    return out


def group_privacy_probabilities(ds: Dataset) -> list[dict]:
    """Share of the dataset and P(private) for all 8 people x sensitive x outdoor cells."""
    cells = {
        (p, s, o): [0, 0]  # [n_private, n_total]
        for p in (False, True) for s in (False, True) for o in (False, True)
    }
    total = 0
    for _, label, features in _labeled_with_features(ds):
        member = group_membership(features)
        key = (member.has_people, member.is_sensitive, member.is_outdoor)
        cells[key][1] += 1
        if label is PrivacyLabel.PRIVATE:
            cells[key][0] += 1
        total += 1
    if total == 0:
        raise EmptyDataset("no labeled images with full privacy features")
    out = []
    for (p, s, o), (n_private, n_cell) in sorted(cells.items()):
        out.append({
            "has_people": p,
            "is_sensitive": s,
            "is_outdoor": o,
            "share": n_cell / total,
            "p_private": n_private / n_cell if n_cell else None,
            "support": n_cell,
        })
    return out


# --- report writers (JSON + flat CSV per analysis) ---------------------------

def write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
