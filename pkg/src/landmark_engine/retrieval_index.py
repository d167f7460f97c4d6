"""Inverted index over BoVW vectors with term-at-a-time cosine scoring.

Scores are exact cosine similarities (vectors are stored normalized), so the
index must rank identically to a brute-force scan; a test holds it to that.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, MissingArtifactError, ValidationError
from .vocabulary import WeightedBovw

MAGIC = b"LMIX"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHQ")


@dataclass
class RankedMatch:
    image_id: str
    tfidf_score: float
    verified: bool = False
    inliers: int = 0
    homography: np.ndarray | None = None


@dataclass
class InvertedIndex:
    k: int
    idf: np.ndarray
    image_ids: list[str] = field(default_factory=list)
    postings: dict[int, list[tuple[str, float]]] = field(default_factory=dict)
    norms: dict[str, float] = field(default_factory=dict)


def build_index(bovws: list[tuple[str, WeightedBovw]], idf: np.ndarray) -> InvertedIndex:
    """Index a corpus of (image_id, bovw) pairs. Ids must be unique; empty
    images are indexed with no postings."""
    index = InvertedIndex(k=len(idf), idf=np.asarray(idf, dtype=np.float64))
    seen = set()
    for image_id, bovw in bovws:
        if image_id in seen:
            raise ValidationError(f"duplicate image_id {image_id!r} in index input")
        seen.add(image_id)
        index.image_ids.append(image_id)
        index.norms[image_id] = bovw.norm() if len(bovw) else 0.0
        for word, weight in bovw.weights.items():
            if weight <= 0:
                raise ValidationError(
                    f"non-positive weight for word {word} in image {image_id}")
            index.postings.setdefault(word, []).append((image_id, weight))
    for word in index.postings:
        index.postings[word].sort(key=lambda p: p[0])
    return index


def query(index: InvertedIndex, q: WeightedBovw, k: int = 10) -> list[RankedMatch]:
    """Top-k images by cosine similarity; only images sharing a word appear.

    Ties break by ascending image id, and the top-k list is a prefix of the
    top-(k+1) list by construction.
    """
    if k <= 0 or not len(q):
        return []
    scores: dict[str, float] = {}
    for word, q_weight in q.weights.items():
        for image_id, weight in index.postings.get(word, ()):
            scores[image_id] = scores.get(image_id, 0.0) + q_weight * weight
    q_norm = q.norm()
    ranked = []
    for image_id, accum in scores.items():
        denom = q_norm * index.norms[image_id]
        score = accum / denom if denom > 0 else 0.0
        ranked.append(RankedMatch(image_id=image_id, tfidf_score=min(1.0, score)))
    ranked.sort(key=lambda m: (-m.tfidf_score, m.image_id))
    return ranked[:k]


def save_index(index: InvertedIndex, path: str | Path, config_digest: str = "") -> None:
    payload = {
        "k": index.k,
        "idf": [float(v) for v in index.idf],
        "image_ids": index.image_ids,
        "norms": {i: float(index.norms[i]) for i in index.image_ids},
        "postings": {str(w): [[i, float(v)] for i, v in plist]
                     for w, plist in sorted(index.postings.items())},
        "config_digest": config_digest,
    }
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(blob)))
        fh.write(blob)


def load_index(path: str | Path) -> InvertedIndex:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(
            f"no retrieval index at {path}; run the index stage first", stage="index")
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise FormatError("index file shorter than its header", offset=0)
        magic, version, length = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported index version {version}", offset=4)
        blob = fh.read(length)
        if len(blob) < length:
            raise FormatError("index payload truncated", offset=_HEADER.size + len(blob))
    payload = json.loads(blob.decode("utf-8"))
    index = InvertedIndex(
        k=int(payload["k"]),
        idf=np.array(payload["idf"], dtype=np.float64),
        image_ids=list(payload["image_ids"]),
        norms={i: float(v) for i, v in payload["norms"].items()},
        postings={int(w): [(i, float(v)) for i, v in plist]
                  for w, plist in payload["postings"].items()},
    )
    return index
