"""Query-time object recognition over discovered clusters.

A query is quantized, run through the retrieval index of cluster
representatives (or iconoids only, for the center method), spatially
verified, and turned into an object ranking by one of five scorers:

* center      rank objects exactly as their iconoids rank for the query
* size        candidates with a verified member, scored by cluster size
* voting      one vote per verified member per containing object
* best-match  walk the image ranking, emit unseen objects as they appear
* overlap     propagate the query frame onto each iconoid and score by area

Every ranking is strictly ordered: each scorer's tie chain ends at the
object id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_model import Dataset, ImageRecord
from .errors import ValidationError
from .geometry import GeometryConfig, frame_polygon, verify_and_rerank
from .iconoid_shift import (IconoidShiftConfig, ObjectCluster, PairOverlapCache,
                            _overlap_fraction, _propagate)
from .match_graph import MatchingGraph
from .retrieval_index import InvertedIndex, RankedMatch, query as index_query
from .vocabulary import Vocabulary, build_bovw, quantize

METHODS = ("center", "size", "voting", "best-match", "overlap")


@dataclass
class ObjectScore:
    object_id: str
    method: str
    score: float
    rank: int
    verified: bool = True


@dataclass
class EngineState:
    dataset: Dataset
    vocab: Vocabulary
    geometry: GeometryConfig
    clustering: IconoidShiftConfig
    graph: MatchingGraph
    clusters: list[ObjectCluster]
    rep_index: InvertedIndex
    rep_idf: np.ndarray
    iconoid_index: InvertedIndex
    iconoid_idf: np.ndarray
    rep_objects: dict[str, list[str]]      # representative image -> object ids
    words: dict[str, np.ndarray] = field(default_factory=dict)
    overlap_cache: PairOverlapCache | None = None

    def __post_init__(self):
        self.clusters_by_id = {c.object_id: c for c in self.clusters}
        self.iconoid_to_object = {c.iconoid: c.object_id for c in self.clusters}

    def cluster_size(self, object_id: str) -> int:
        return self.clusters_by_id[object_id].size


def _query_iconoid_overlap(engine: EngineState, query: ImageRecord,
                           h_query_to_rep: np.ndarray, rep: str, iconoid: str) -> float:
    """Map the full query frame through the verified homography onto the
    representative, then hop onward to the iconoid along the graph."""
    rec_rep = engine.dataset.get(rep)
    hops = [(h_query_to_rep, float(rec_rep.width), float(rec_rep.height))]
    if rep != iconoid:
        if engine.overlap_cache is None:
            engine.overlap_cache = PairOverlapCache(
                engine.graph, engine.dataset, engine.clustering.overlap_mode)
        path = engine.overlap_cache.paths_from(rep).get(iconoid)
        if path is None:
            return 0.0
        for a, b in zip(path, path[1:]):
            rec_b = engine.dataset.get(b)
            hops.append((engine.graph.homography(a, b),
                         float(rec_b.width), float(rec_b.height)))
    result = _propagate(frame_polygon(query.width, query.height), hops)
    if result is None:
        return 0.0
    poly, inverses = result
    rec_icon = engine.dataset.get(iconoid)
    return _overlap_fraction(poly, inverses, query.frame_area(),
                             rec_icon.frame_area(), engine.clustering.overlap_mode)


def _match_score(m: RankedMatch) -> float:
    return float(m.inliers) if m.verified else m.tfidf_score


def score_center(reranked: list[RankedMatch], engine: EngineState) -> list[ObjectScore]:
    out = []
    for m in reranked:
        object_id = engine.iconoid_to_object[m.image_id]
        out.append(ObjectScore(object_id=object_id, method="center",
                               score=_match_score(m), rank=0, verified=m.verified))
    return out


def _best_ranks(reranked: list[RankedMatch], engine: EngineState,
                verified_only: bool = True) -> dict[str, int]:
    ranks: dict[str, int] = {}
    for pos, m in enumerate(reranked):
        if verified_only and not m.verified:
            continue
        for object_id in engine.rep_objects.get(m.image_id, ()):
            ranks.setdefault(object_id, pos)
    return ranks


def score_size(reranked: list[RankedMatch], engine: EngineState) -> list[ObjectScore]:
    ranks = _best_ranks(reranked, engine)
    scored = sorted(ranks, key=lambda o: (-engine.cluster_size(o), ranks[o], o))
    return [ObjectScore(object_id=o, method="size",
                        score=float(engine.cluster_size(o)), rank=0)
            for o in scored]


def score_voting(reranked: list[RankedMatch], engine: EngineState) -> list[ObjectScore]:
    votes: dict[str, int] = {}
    ranks: dict[str, int] = {}
    fallback = False
    for pos, m in enumerate(reranked):
        if not m.verified:
            continue
        for object_id in engine.rep_objects.get(m.image_id, ()):
            votes[object_id] = votes.get(object_id, 0) + 1
            ranks.setdefault(object_id, pos)
    if not votes and reranked:
        # nothing verified: the single best retrieval match votes once
        fallback = True
        for pos, m in enumerate(reranked):
            hit = engine.rep_objects.get(m.image_id, ())
            if hit:
                for object_id in hit:
                    votes[object_id] = 1
                    ranks[object_id] = pos
                break
    order = sorted(votes, key=lambda o: (-votes[o], ranks[o],
                                         -engine.cluster_size(o), o))
    return [ObjectScore(object_id=o, method="voting", score=float(votes[o]),
                        rank=0, verified=not fallback)
            for o in order]


def score_best_match(reranked: list[RankedMatch], engine: EngineState,
                     k: int) -> list[ObjectScore]:
    out = []
    seen = set()
    for m in reranked:
        objs = sorted(engine.rep_objects.get(m.image_id, ()),
                      key=lambda o: (-engine.cluster_size(o), o))
        for object_id in objs:
            if object_id in seen:
                continue
            seen.add(object_id)
            out.append(ObjectScore(object_id=object_id, method="best-match",
                                   score=_match_score(m), rank=0, verified=m.verified))
            if len(out) >= k:
                return out
    return out


def score_overlap(reranked: list[RankedMatch], engine: EngineState,
                  query: ImageRecord) -> list[ObjectScore]:
    best: dict[str, float] = {}
    ranks: dict[str, int] = {}
    for pos, m in enumerate(reranked):
        if not m.verified or m.homography is None:
            continue
        for object_id in engine.rep_objects.get(m.image_id, ()):
            cluster = engine.clusters_by_id[object_id]
            value = _query_iconoid_overlap(engine, query, m.homography,
                                           m.image_id, cluster.iconoid)
            if object_id not in best or value > best[object_id]:
                best[object_id] = value
            ranks.setdefault(object_id, pos)
    order = sorted(best, key=lambda o: (-best[o], ranks[o], o))
    return [ObjectScore(object_id=o, method="overlap", score=best[o], rank=0)
            for o in order]


def recognize(query_record: ImageRecord, engine: EngineState, method: str = "voting",
              k: int = 3) -> list[ObjectScore]:
    """Recognize objects in a query image. Returns at most k ObjectScores in
    rank order; empty when nothing in the index shares a visual word."""
    if method not in METHODS:
        raise ValidationError(f"unknown scoring method {method!r}; expected one of {METHODS}")
    if k < 1:
        raise ValidationError("k must be positive")
    descriptors = query_record.descriptors()
    words = quantize(descriptors, engine.vocab) if descriptors.size else np.zeros(0, int)

    if method == "center":
        index, idf = engine.iconoid_index, engine.iconoid_idf
    else:
        index, idf = engine.rep_index, engine.rep_idf
    bovw = build_bovw(words, idf)
    ranked = index_query(index, bovw, k=engine.geometry.verify_depth)
    reranked = verify_and_rerank(query_record, ranked, engine.dataset, engine.geometry)

    if method == "center":
        scores = score_center(reranked, engine)
    elif method == "size":
        scores = score_size(reranked, engine)
    elif method == "voting":
        scores = score_voting(reranked, engine)
    elif method == "best-match":
        scores = score_best_match(reranked, engine, k)
    else:
        scores = score_overlap(reranked, engine, query_record)

    scores = scores[:k]
    for i, s in enumerate(scores):
        s.rank = i + 1
    return scores
