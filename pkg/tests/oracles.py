"""Independent reference implementations the tests compare the engine against.

Everything here is deliberately written with different machinery than the
package: dict arithmetic instead of inverted postings, per-row loops instead
of blocked matmuls, shapely instead of hand-rolled clipping, exhaustive
search instead of greedy heuristics. Slow is fine; these run on small
inputs.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from shapely.geometry import Polygon, box


# ---------------------------------------------------------------------------
# retrieval: tf-idf cosine over word lists, dict based

def tfidf_vector(word_list, idf: dict[int, float]) -> dict[int, float]:
    counts: dict[int, float] = {}
    for w in word_list:
        counts[int(w)] = counts.get(int(w), 0.0) + 1.0
    total = sum(counts.values())
    if total == 0:
        return {}
    vec = {w: (c / total) * idf.get(w, 0.0) for w, c in counts.items()}
    norm = math.sqrt(sum(v * v for v in vec.values()))
    if norm == 0.0:
        # same degenerate-corpus rule the engine documents: fall back to
        # plain term frequencies when every present word has zero idf
        vec = {w: c / total for w, c in counts.items()}
        norm = math.sqrt(sum(v * v for v in vec.values()))
    return {w: v / norm for w, v in vec.items() if v > 0.0}


def idf_table(word_lists) -> dict[int, float]:
    n = len(word_lists)
    df: dict[int, int] = {}
    for words in word_lists:
        for w in set(int(x) for x in words):
            df[w] = df.get(w, 0) + 1
    return {w: math.log(n / d) for w, d in df.items()}


def cosine_ranking(corpus: dict[str, dict[int, float]],
                   query_vec: dict[int, float], k: int):
    """Full cosine scoring of normalized sparse vectors, ties by image id."""
    scored = []
    for image_id, vec in corpus.items():
        s = sum(qv * vec.get(w, 0.0) for w, qv in query_vec.items())
        if s > 0.0:
            scored.append((min(1.0, s), image_id))
    scored.sort(key=lambda t: (-t[0], t[1]))
    return scored[:k]


# ---------------------------------------------------------------------------
# quantization: per-row nearest center with explicit ties

def nearest_centers(descriptors: np.ndarray, centers: np.ndarray) -> np.ndarray:
    out = np.empty(len(descriptors), dtype=np.int64)
    for i, d in enumerate(np.asarray(descriptors, dtype=np.float64)):
        dists = [float(np.sqrt(((d - c) ** 2).sum())) for c in centers]
        best = min(range(len(centers)), key=lambda j: (dists[j], j))
        out[i] = best
    return out


# ---------------------------------------------------------------------------
# polygon overlap along a homography chain, via shapely

def _apply_h(h: np.ndarray, poly: Polygon) -> Polygon | None:
    pts = np.array(poly.exterior.coords[:-1], dtype=np.float64)
    ones = np.ones((len(pts), 1))
    hom = np.hstack([pts, ones]) @ np.asarray(h, dtype=np.float64).T
    w = hom[:, 2]
    if np.any(np.abs(w) < 1e-12) or (np.any(w > 0) and np.any(w < 0)):
        return None
    mapped = hom[:, :2] / w[:, None]
    shape = Polygon(mapped)
    if not shape.is_valid:
        shape = shape.buffer(0)
    return shape


def chain_overlap(homographies, frames, mode: str = "min") -> float:
    """Overlap fraction after pushing frame 0 through the chain.

    homographies[i] maps frame i coordinates to frame i+1; frames is the
    list of (width, height), one longer than the homography list. Clips at
    every intermediate frame, then compares the survivor against both
    endpoint frames (or just the target for mode "target").
    """
    if len(frames) != len(homographies) + 1:
        raise ValueError("need one more frame than homographies")
    w0, h0 = frames[0]
    region = box(0.0, 0.0, w0, h0)
    src_area = region.area
    for h, (fw, fh) in zip(homographies, frames[1:]):
        mapped = _apply_h(h, region)
        if mapped is None:
            return 0.0
        region = mapped.intersection(box(0.0, 0.0, fw, fh))
        if region.is_empty or region.area <= 0.0 or not isinstance(region, Polygon):
            return 0.0
    wN, hN = frames[-1]
    dst_ratio = region.area / (wN * hN)
    if mode == "target":
        return float(min(1.0, dst_ratio))
    back = region
    for h in reversed(homographies):
        back = _apply_h(np.linalg.inv(h), back)
        if back is None:
            return 0.0
    src_ratio = back.area / src_area
    return float(min(1.0, min(src_ratio, dst_ratio)))


def rect_clip_area(poly_pts: np.ndarray, width: float, height: float) -> float:
    """Area of polygon ∩ frame rectangle, shapely's answer."""
    shape = Polygon(poly_pts)
    if not shape.is_valid:
        shape = shape.buffer(0)
    return float(shape.intersection(box(0.0, 0.0, width, height)).area)


# ---------------------------------------------------------------------------
# exhaustive minimum set cover containing a forced element

def min_cover_size(members, cover: dict[str, set[str]], forced: str) -> int:
    """Smallest number of cover sets (forced one included) whose union is
    all members. Exhaustive; fine for up to ~15 members."""
    universe = set(members)
    others = [m for m in members if m != forced]
    base = set(cover[forced])
    if base >= universe:
        return 1
    for size in range(1, len(others) + 1):
        for combo in itertools.combinations(others, size):
            covered = set(base)
            for m in combo:
                covered |= cover[m]
            if covered >= universe:
                return 1 + size
    raise ValueError("no cover exists even using every member")
