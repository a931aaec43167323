"""Shared fixtures: tiny handwritten datasets, a synthetic CSV corpus, and a
counting mock SafeSearch HTTP server."""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from privlens.data_io import AnnotationRecord, Dataset, ImageRecord, Split
from privlens.features import Likelihood, PrivacyFeatureVector, PrivacyLabel

L = Likelihood


def make_pfv(adult=L.VERY_UNLIKELY, racy=L.VERY_UNLIKELY, medical=L.VERY_UNLIKELY,
             spoofed=L.VERY_UNLIKELY, violent=L.VERY_UNLIKELY,
             people_prob=0.0, people_count=0, outdoor_prob=0.0):
    return PrivacyFeatureVector(adult, racy, medical, spoofed, violent,
                                people_prob, people_count, outdoor_prob)


@pytest.fixture
def tiny_dataset():
    """Four labeled images with privacy features, two annotated."""
    records = [
        ImageRecord("a", PrivacyLabel.PUBLIC, Split.TRAIN),
        ImageRecord("b", PrivacyLabel.PRIVATE, Split.TRAIN),
        ImageRecord("c", PrivacyLabel.PUBLIC, Split.TRAIN),
        ImageRecord("d", PrivacyLabel.PRIVATE, Split.TEST),
    ]
    features = {
        "a": make_pfv(people_count=0, outdoor_prob=0.9),
        "b": make_pfv(racy=L.POSSIBLE, people_prob=0.8, people_count=1, outdoor_prob=0.1),
        "c": make_pfv(people_prob=0.6, people_count=1, outdoor_prob=0.7),
        "d": make_pfv(adult=L.VERY_LIKELY, people_prob=0.9, people_count=2, outdoor_prob=0.2),
    }
    return Dataset(records=records, privacy_features=features)


def synth_features(rng: np.random.Generator, n: int):
    """Random draws of the eight features as raw numeric columns."""
    levels = rng.choice(5, size=(n, 5), p=[0.55, 0.2, 0.12, 0.08, 0.05])
    people_prob = rng.uniform(0, 1, n)
    people_count = rng.poisson(1.2, n)
    outdoor_prob = rng.uniform(0, 1, n)
    return levels, people_prob, people_count, outdoor_prob


def synth_label_rule(levels, people_prob, people_count, outdoor_prob):
    """Known linear rule over the encoded features; no noise."""
    enc = levels / 4.0
    score = (
        1.4 * enc[:, 0] + 1.2 * enc[:, 1] + 0.8 * enc[:, 2]
        + 0.6 * enc[:, 3] + 0.8 * enc[:, 4]
        + 0.7 * people_prob + 0.15 * np.minimum(people_count, 4)
        - 0.9 * outdoor_prob
    )
    # threshold near the score median keeps the classes roughly balanced
    return (score > 1.08).astype(float)


def write_synth_corpus(dirpath, n=200, seed=7, noise=0.0, splits=True):
    """Write manifest.csv + privacy_features.csv for a synthetic dataset."""
    rng = np.random.default_rng(seed)
    levels, people_prob, people_count, outdoor_prob = synth_features(rng, n)
    y = synth_label_rule(levels, people_prob, people_count, outdoor_prob)
    if noise:
        flip = rng.uniform(size=n) < noise
        y = np.where(flip, 1.0 - y, y)

    names = [f"img_{i:05d}" for i in range(n)]
    level_tokens = ["VERY_UNLIKELY", "UNLIKELY", "POSSIBLE", "LIKELY", "VERY_LIKELY"]
    split_of = lambda i: ("train" if i % 10 < 7 else "val" if i % 10 == 7 else "test")

    with open(dirpath / "manifest.csv", "w", encoding="utf-8") as fh:
        fh.write("image_id,label,split\n")
        for i, name in enumerate(names):
            label = "private" if y[i] == 1.0 else "public"
            fh.write(f"{name},{label},{split_of(i) if splits else ''}\n")
    with open(dirpath / "privacy_features.csv", "w", encoding="utf-8") as fh:
        fh.write("image_id,adult,racy,medical,spoofed,violent,"
                 "people_prob,people_count,outdoor_prob\n")
        for i, name in enumerate(names):
            cells = [level_tokens[k] for k in levels[i]]
            fh.write(f"{name},{','.join(cells)},{people_prob[i]:.6f},"
                     f"{people_count[i]},{outdoor_prob[i]:.6f}\n")
    return y


@pytest.fixture
def synth_corpus(tmp_path):
    write_synth_corpus(tmp_path, n=200, seed=7)
    return tmp_path


SAFE_SEARCH_OK = {
    "adult": "VERY_UNLIKELY", "racy": "POSSIBLE", "medical": "VERY_UNLIKELY",
    "spoof": "VERY_UNLIKELY", "violence": "UNLIKELY",
}


class MockSafeSearchHandler(BaseHTTPRequestHandler):
    """Counts requests; URIs containing 'limited' are permanently rate-limited."""

    def do_POST(self):
        self.server.calls += 1
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length))
        uri = body["image"]["source"]["uri"]
        if "limited" in uri:
            self.send_response(429)
            self.end_headers()
            return
        payload = json.dumps(SAFE_SEARCH_OK).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def mock_server():
    server = HTTPServer(("127.0.0.1", 0), MockSafeSearchHandler)
    server.calls = 0
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
