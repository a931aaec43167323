"""Privacy-feature extraction from external evidence.

Three sources feed the eight features:
  - a SafeSearch-style HTTP service for the five sensitivity likelihoods,
  - a detections CSV (image_id,class_name,confidence) for people features,
  - a Places365-style scene store + indoor/outdoor map for the outdoor prob.

Batch extraction caches SafeSearch responses as one JSON file per image and
collects per-image failures into a report instead of aborting.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from .data_io import ImageRecord
from .errors import (
    AuthError,
    ExtractionError,
    MalformedResponse,
    ParseError,
    RateLimited,
    TransportError,
    UnmappedCategory,
)
from .features import Likelihood, SENSITIVITY_CLASSES

log = logging.getLogger(__name__)

ENV_URL = "PRIVLENS_SAFESEARCH_URL"
ENV_KEY = "PRIVLENS_SAFESEARCH_KEY"

#: response field -> our sensitivity class name
_RESPONSE_FIELDS = {
    "adult": "adult",
    "racy": "racy",
    "medical": "medical",
    "spoof": "spoofed",
    "violence": "violent",
}


@dataclass(frozen=True)
class Detection:
    class_name: str
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of [0,1]: {self.confidence}")


@dataclass(frozen=True)
class SceneDistribution:
    probs: np.ndarray
    category_names: tuple[str, ...]

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.size != len(self.category_names):
            raise ValueError("probs and category_names must align")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-6:
            raise ValueError("scene probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True)
class SafeSearchResult:
    """Five likelihoods; None marks an Unknown the service could not rate."""

    adult: Likelihood | None
    racy: Likelihood | None
    medical: Likelihood | None
    spoofed: Likelihood | None
    violent: Likelihood | None

    def to_dict(self) -> dict:
        return {c: (getattr(self, c).name if getattr(self, c) is not None else None)
                for c in SENSITIVITY_CLASSES}

    @classmethod
    def from_dict(cls, d: dict) -> "SafeSearchResult":
        return cls(**{
            c: (Likelihood[d[c]] if d.get(c) is not None else None)
            for c in SENSITIVITY_CLASSES
        })


def people_features(
    detections: list[Detection], conf_threshold: float = 0.5
) -> tuple[int, float]:
    """(count of person detections at/above threshold, max person confidence).

    The probability deliberately ignores the threshold so weak evidence still
    reaches the classifier.
    """
    if not 0.0 <= conf_threshold <= 1.0:
        raise ValueError("conf_threshold must lie in [0,1]")
    person_confs = [d.confidence for d in detections if d.class_name == "person"]
    count = sum(1 for c in person_confs if c >= conf_threshold)
    prob = max(person_confs, default=0.0)
    return count, prob


def outdoor_probability(scene: SceneDistribution, io_map: dict[str, str]) -> float:
    """Total probability mass on categories mapped to 'outdoor'."""
    total = 0.0
    for name, p in zip(scene.category_names, scene.probs):
        try:
            side = io_map[name]
        except KeyError:
            raise UnmappedCategory(name)
        if side == "outdoor":
            total += float(p)
    return total


class _RateLimiter:
    """Token-bucket style limiter: at most `rate` acquisitions per second."""

    def __init__(self, rate: float, clock=time.monotonic, sleep=time.sleep):
        self.interval = 1.0 / rate if rate > 0 else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_free = 0.0

    def acquire(self):
        if self.interval == 0.0:
            return
        with self._lock:
            now = self._clock()
            wait = self._next_free - now
            self._next_free = max(now, self._next_free) + self.interval
        if wait > 0:
            self._sleep(wait)


@dataclass
class SafeSearchClient:
    """HTTP client with client-side rate limiting and exponential backoff.

    `transport` is a callable (url, headers, json_body) -> (status, parsed_json)
    so tests can count calls without a live server; the default posts with
    requests.
    """

    url: str
    api_key: str = ""
    max_attempts: int = 5
    backoff_base: float = 1.0
    requests_per_second: float = 5.0
    transport: object = None
    sleep: object = time.sleep

    def __post_init__(self):
        if self.transport is None:
            self.transport = self._requests_transport
        self._limiter = _RateLimiter(self.requests_per_second, sleep=self.sleep)

    @classmethod
    def from_env(cls, **kwargs) -> "SafeSearchClient":
        url = os.environ.get(ENV_URL)
        if not url:
            raise ValueError(f"{ENV_URL} not set")
        return cls(url=url, api_key=os.environ.get(ENV_KEY, ""), **kwargs)

    def _requests_transport(self, url, headers, body):
        try:
            resp = requests.post(url, headers=headers, json=body, timeout=30)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        try:
            payload = resp.json()
        except ValueError:
            payload = None
        return resp.status_code, payload

    def annotate(self, image_ref: str) -> SafeSearchResult:
        """One SafeSearch request with retries; raises on permanent failure."""
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        body = {"image": {"source": {"uri": image_ref}}}
        last_error = None
        for attempt in range(self.max_attempts):
            self._limiter.acquire()
            status, payload = self.transport(self.url, headers, body)
            if status in (401, 403):
                raise AuthError(f"HTTP {status} from SafeSearch endpoint")
            if status == 429:
                last_error = RateLimited("HTTP 429 from SafeSearch endpoint")
                if attempt + 1 < self.max_attempts:
                    self.sleep(self.backoff_base * (2 ** attempt))
                continue
            if status != 200:
                raise TransportError(f"HTTP {status} from SafeSearch endpoint")
            return _parse_safe_search(payload)
        raise last_error if last_error else TransportError("no attempts made")


def _parse_safe_search(payload) -> SafeSearchResult:
    if not isinstance(payload, dict):
        raise MalformedResponse(f"expected JSON object, got {type(payload).__name__}")
    values = {}
    for resp_field, class_name in _RESPONSE_FIELDS.items():
        if resp_field not in payload:
            raise MalformedResponse(f"response missing field {resp_field!r}")
        token = str(payload[resp_field]).upper()
        if token == "UNKNOWN":
            values[class_name] = None
        else:
            try:
                values[class_name] = Likelihood[token]
            except KeyError:
                raise MalformedResponse(f"bad likelihood token {token!r}")
    return SafeSearchResult(**values)


def safe_search_extract(image_ref: str, client: SafeSearchClient) -> SafeSearchResult:
    return client.annotate(image_ref)


def load_detections(path) -> dict[str, list[Detection]]:
    out: dict[str, list[Detection]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["image_id", "class_name", "confidence"]:
            raise ParseError("expected header image_id,class_name,confidence", path=path, line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", path=path, line=lineno)
            try:
                det = Detection(class_name=row[1].strip(), confidence=float(row[2]))
            except ValueError as exc:
                raise ParseError(str(exc), path=path, line=lineno) from exc
            out.setdefault(row[0].strip(), []).append(det)
    return out


def load_io_map(path) -> dict[str, str]:
    """Lines of `category,indoor|outdoor`."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2 or parts[1].strip() not in ("indoor", "outdoor"):
                raise ParseError(f"bad io_map line {line!r}", path=path, line=lineno)
            out[parts[0].strip()] = parts[1].strip()
    return out


def load_categories(path) -> tuple[str, ...]:
    with open(path, "r", encoding="utf-8") as fh:
        return tuple(line.strip() for line in fh if line.strip())


@dataclass
class ExtractionSources:
    """Whatever evidence is available; any subset may be None."""

    safe_search: SafeSearchClient | None = None
    image_refs: dict[str, str] = field(default_factory=dict)  # image_id -> URI
    detections: dict[str, list[Detection]] | None = None
    scenes: dict[str, np.ndarray] | None = None  # image_id -> 365 probs
    categories: tuple[str, ...] | None = None
    io_map: dict[str, str] | None = None
    person_conf_threshold: float = 0.5


@dataclass
class ExtractionReport:
    n_images: int = 0
    n_complete: int = 0
    failures: dict[str, str] = field(default_factory=dict)
    imputed: dict[str, list[str]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "n_images": self.n_images,
            "n_complete": self.n_complete,
            "failures": dict(sorted(self.failures.items())),
            "imputed": {k: sorted(v) for k, v in sorted(self.imputed.items())},
        }


def _cache_path(cache_dir: Path, image_id: str) -> Path:
    return cache_dir / f"{image_id}.json"


def _sensitivity_for(
    image_id: str, sources: ExtractionSources, cache_dir: Path | None
) -> SafeSearchResult | None:
    """Cached SafeSearch lookup; None when no sensitivity source exists."""
    if cache_dir is not None:
        cached = _cache_path(cache_dir, image_id)
        if cached.exists():
            return SafeSearchResult.from_dict(json.loads(cached.read_text("utf-8")))
    if sources.safe_search is None:
        return None
    ref = sources.image_refs.get(image_id, image_id)
    result = sources.safe_search.annotate(ref)
    if cache_dir is not None:
        tmp = _cache_path(cache_dir, image_id).with_suffix(".json.tmp")
        tmp.write_text(json.dumps(result.to_dict(), sort_keys=True), "utf-8")
        tmp.replace(_cache_path(cache_dir, image_id))
    return result


def _format_float(x: float) -> str:
    return format(float(x), ".6f")


def run_extraction(
    records: list[ImageRecord],
    sources: ExtractionSources,
    cache_dir,
    out_path,
    workers: int = 4,
) -> ExtractionReport:
    """Produce privacy_features.csv for a manifest; idempotent under re-run.

    Per-image failures land in the report; successful rows are still written,
    in manifest order, so re-runs with identical upstream responses produce
    byte-identical files.
    """
    cache = Path(cache_dir) if cache_dir is not None else None
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)
    report = ExtractionReport(n_images=len(records))

    def extract_one(record: ImageRecord):
        image_id = record.image_id
        sensitivity = _sensitivity_for(image_id, sources, cache)
        if sources.detections is not None:
            count, prob = people_features(
                sources.detections.get(image_id, []), sources.person_conf_threshold
            )
        else:
            count, prob = 0, 0.0
        outdoor = 0.0
        if sources.scenes is not None and image_id in sources.scenes:
            scene = SceneDistribution(sources.scenes[image_id], sources.categories)
            outdoor = outdoor_probability(scene, sources.io_map)
        return sensitivity, count, prob, outdoor

    results: dict[str, tuple] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {pool.submit(extract_one, r): r.image_id for r in records}
        for future, image_id in futures.items():
            try:
                results[image_id] = future.result()
            except (ExtractionError, UnmappedCategory) as exc:
                report.failures[image_id] = f"{type(exc).__name__}: {exc}"

    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "image_id", "adult", "racy", "medical", "spoofed", "violent",
            "people_prob", "people_count", "outdoor_prob",
        ])
        for record in records:
            if record.image_id not in results:
                continue
            sensitivity, count, prob, outdoor = results[record.image_id]
            cells = []
            missing = []
            for c in SENSITIVITY_CLASSES:
                level = getattr(sensitivity, c) if sensitivity is not None else None
                if level is None:
                    cells.append("")
                    missing.append(c)
                else:
                    cells.append(level.name)
            if missing:
                report.imputed[record.image_id] = missing
            writer.writerow(
                [record.image_id, *cells,
                 _format_float(prob), str(count), _format_float(outdoor)]
            )
            report.n_complete += 1
    return report
