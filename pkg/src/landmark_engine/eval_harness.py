"""Evaluation harness: query grouping, rated metrics, and the full report.

Recognition quality is reported as four numbers per method:

    good-1  top result is a correct object
    ok-1    top result is correct or acceptably related (whole vs. detail)
    good-3  a correct object appears in the top 3
    ok-3    a correct or related object appears in the top 3

Queries that are near-duplicates of each other would otherwise vote many
times for the same behavior, so they are grouped first: two queries land in
one group when they verify geometrically and their frames overlap almost
entirely. Each group counts once, represented by its smallest id.

Every report is self-checked before it leaves this module: the four metrics
must satisfy the containment chain (good-1 <= ok-1 <= ok-3 and
good-1 <= good-3 <= ok-3) and the overall number must equal the
query-count-weighted mean of the per-category numbers to within 1e-9.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_model import Dataset, ImageRecord, RelevanceAnnotation
from .errors import ValidationError
from .geometry import (GeometryConfig, _pair_seed, estimate_homography,
                       frame_polygon, match_descriptors)
from .iconoid_shift import ObjectCluster, _overlap_fraction, _propagate
from .recognition import METHODS, EngineState, recognize
from .retrieval_index import build_index, query as index_query
from .vocabulary import Vocabulary, build_bovw, compute_idf, quantize

RATINGS = ("good", "ok", "bad")

DUPLICATE_OVERLAP = 0.95
GROUPING_DEPTH = 20


@dataclass
class QueryGroups:
    """Partition of the query set into near-duplicate groups."""

    assignment: dict[str, str]              # query id -> representative id

    def __post_init__(self):
        members: dict[str, list[str]] = {}
        for qid, rep in self.assignment.items():
            members.setdefault(rep, []).append(qid)
        self.members = {rep: sorted(ids) for rep, ids in members.items()}

    @property
    def representatives(self) -> list[str]:
        return sorted(self.members)

    def size(self, rep: str) -> int:
        return len(self.members[rep])


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller root wins so representatives are stable
            lo, hi = sorted((ra, rb))
            self.parent[hi] = lo


def _one_hop_overlap(h: np.ndarray, src: ImageRecord, dst: ImageRecord,
                     mode: str = "min") -> float:
    result = _propagate(frame_polygon(src.width, src.height),
                        [(h, float(dst.width), float(dst.height))])
    if result is None:
        return 0.0
    poly, inverses = result
    return _overlap_fraction(poly, inverses, src.frame_area(), dst.frame_area(), mode)


def group_queries(queries: list[ImageRecord], vocab: Vocabulary,
                  geometry: GeometryConfig,
                  overlap_threshold: float = DUPLICATE_OVERLAP,
                  depth: int = GROUPING_DEPTH) -> QueryGroups:
    """Collapse near-duplicate queries into groups.

    The queries are indexed against themselves; a pair joins the same group
    when spatial verification passes and the verified homography maps one
    frame almost entirely onto the other (overlap >= threshold both ways).
    Group representative is the smallest member id.
    """
    ids = [q.image_id for q in queries]
    if len(ids) != len(set(ids)):
        raise ValidationError("duplicate query ids in grouping input")
    by_id = {q.image_id: q for q in queries}
    uf = _UnionFind(ids)

    words = {q.image_id: quantize(q.descriptors(), vocab)
             if q.features else np.zeros(0, dtype=np.int64)
             for q in queries}
    idf = compute_idf([words[i] for i in sorted(words)], vocab.k)
    bovws = {i: build_bovw(words[i], idf) for i in words}
    index = build_index([(i, bovws[i]) for i in sorted(words)], idf)

    checked: set[tuple[str, str]] = set()
    for qid in sorted(words):
        ranked = index_query(index, bovws[qid], k=depth)
        for m in ranked:
            if m.image_id == qid:
                continue
            pair = (min(qid, m.image_id), max(qid, m.image_id))
            if pair in checked:
                continue
            checked.add(pair)
            rec_a, rec_b = by_id[pair[0]], by_id[pair[1]]
            corr = match_descriptors(rec_a.descriptors(), rec_b.descriptors(),
                                     geometry.ratio_test)
            if len(corr) < 4:
                continue
            ai = np.array([p[0] for p in corr])
            bi = np.array([p[1] for p in corr])
            seed = _pair_seed(geometry.ransac_seed, pair[0], pair[1])
            result = estimate_homography(rec_a.positions()[ai],
                                         rec_b.positions()[bi], geometry, seed=seed)
            if result is None:
                continue
            h, inlier_idx = result
            if inlier_idx.size < geometry.inlier_threshold:
                continue
            if _one_hop_overlap(h, rec_a, rec_b) >= overlap_threshold:
                uf.union(*pair)

    components: dict[str, list[str]] = {}
    for qid in ids:
        components.setdefault(uf.find(qid), []).append(qid)
    assignment = {}
    for group in components.values():
        rep = min(group)
        for qid in group:
            assignment[qid] = rep
    return QueryGroups(assignment)


# ---------------------------------------------------------------------------
# metrics


@dataclass
class GroupRow:
    """One evaluated query group: its category and the rank-ordered ratings
    of whatever the engine returned."""

    category: str
    ratings: list[str]


@dataclass
class MetricBlock:
    good1: float
    ok1: float
    good3: float
    ok3: float
    groups: int

    def as_dict(self) -> dict:
        return {"good1": self.good1, "ok1": self.ok1,
                "good3": self.good3, "ok3": self.ok3, "groups": self.groups}


@dataclass
class MetricReport:
    overall: MetricBlock
    per_category: dict[str, MetricBlock] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"overall": self.overall.as_dict(),
                "per_category": {c: b.as_dict()
                                 for c, b in sorted(self.per_category.items())}}


def _block(rows: list[GroupRow]) -> MetricBlock:
    def hit(ratings: list[str], depth: int, accept: tuple[str, ...]) -> float:
        return 1.0 if any(r in accept for r in ratings[:depth]) else 0.0

    n = len(rows)
    if n == 0:
        return MetricBlock(0.0, 0.0, 0.0, 0.0, 0)
    good = ("good",)
    okay = ("good", "ok")
    return MetricBlock(
        good1=sum(hit(r.ratings, 1, good) for r in rows) / n,
        ok1=sum(hit(r.ratings, 1, okay) for r in rows) / n,
        good3=sum(hit(r.ratings, 3, good) for r in rows) / n,
        ok3=sum(hit(r.ratings, 3, okay) for r in rows) / n,
        groups=n,
    )


def _check_chain(block: MetricBlock, where: str) -> None:
    eps = 1e-9
    chain = (block.good1 <= block.ok1 + eps
             and block.good1 <= block.good3 + eps
             and block.ok1 <= block.ok3 + eps
             and block.good3 <= block.ok3 + eps)
    if not chain:
        raise ValidationError(f"metric containment chain violated for {where}")


def compute_metrics(rows: list[GroupRow]) -> MetricReport:
    """Aggregate rated rows into overall and per-category metrics.

    The overall block is recomputed from the category blocks as a
    query-count-weighted mean and must agree with the direct computation to
    1e-9; a mismatch means the bookkeeping is broken, not the data.
    """
    for row in rows:
        for rating in row.ratings:
            if rating not in RATINGS:
                raise ValidationError(f"unknown rating {rating!r}")

    overall = _block(rows)
    by_cat: dict[str, list[GroupRow]] = {}
    for row in rows:
        by_cat.setdefault(row.category, []).append(row)
    per_category = {c: _block(v) for c, v in sorted(by_cat.items())}

    _check_chain(overall, "overall")
    for cat, block in per_category.items():
        _check_chain(block, cat)

    total = sum(b.groups for b in per_category.values())
    if total != overall.groups:
        raise ValidationError("category group counts do not sum to the total")
    for attr in ("good1", "ok1", "good3", "ok3"):
        direct = getattr(overall, attr)
        weighted = (sum(getattr(b, attr) * b.groups for b in per_category.values())
                    / total) if total else 0.0
        if abs(direct - weighted) > 1e-9:
            raise ValidationError(
                f"overall {attr} differs from the weighted category mean "
                f"({direct!r} vs {weighted!r})")
    return MetricReport(overall=overall, per_category=per_category)


# ---------------------------------------------------------------------------
# recognition evaluation


def map_clusters_to_scene(clusters: list[ObjectCluster],
                          primary_object: dict[str, str]) -> dict[str, str]:
    """Cluster id -> annotated object id, through the iconoid's primary
    object. A cluster whose iconoid is unknown to the annotation set cannot
    be rated and is a hard error."""
    mapping = {}
    for cluster in clusters:
        scene = primary_object.get(cluster.iconoid)
        if scene is None:
            raise ValidationError(
                f"cluster {cluster.object_id} has iconoid {cluster.iconoid} "
                "with no annotated object")
        mapping[cluster.object_id] = scene
    return mapping


def annotation_lookup(annotations: list[RelevanceAnnotation]) -> dict[tuple[str, str], str]:
    table = {}
    for ann in annotations:
        key = (ann.query_id, ann.object_id)
        if key in table and table[key] != ann.rating:
            raise ValidationError(f"conflicting ratings for {key}")
        table[key] = ann.rating
    return table


def evaluate_recognition(engine: EngineState, queries: list[ImageRecord],
                         groups: QueryGroups,
                         ratings: dict[tuple[str, str], str],
                         cluster_to_scene: dict[str, str],
                         method: str, k: int = 3) -> MetricReport:
    """Run one scoring method over the group representatives and rate the
    results. A returned pair missing from the annotation table is a hard
    error: silent zeros would quietly deflate whichever method finds objects
    the annotators never saw."""
    by_id = {q.image_id: q for q in queries}
    rows = []
    for rep in groups.representatives:
        record = by_id[rep]
        scores = recognize(record, engine, method=method, k=k)
        rated = []
        for s in scores:
            scene = cluster_to_scene.get(s.object_id)
            if scene is None:
                raise ValidationError(
                    f"returned cluster {s.object_id} has no annotated object")
            rating = ratings.get((rep, scene))
            if rating is None:
                raise ValidationError(
                    f"no annotation for query {rep} against object {scene}")
            rated.append(rating)
        rows.append(GroupRow(category=record.category or "Uncategorized",
                             ratings=rated))
    return compute_metrics(rows)


def annotation_candidates(engine: EngineState, queries: list[ImageRecord],
                          groups: QueryGroups,
                          cluster_to_scene: dict[str, str],
                          methods: tuple[str, ...] = METHODS,
                          k: int = 3) -> list[tuple[str, str]]:
    """Pairs that actually need human ratings: the union over methods of
    (representative query, returned object). Sorted and deduplicated."""
    by_id = {q.image_id: q for q in queries}
    pairs = set()
    for rep in groups.representatives:
        for method in methods:
            for s in recognize(by_id[rep], engine, method=method, k=k):
                scene = cluster_to_scene.get(s.object_id)
                if scene is None:
                    raise ValidationError(
                        f"returned cluster {s.object_id} has no annotated object")
                pairs.add((rep, scene))
    return sorted(pairs)


# ---------------------------------------------------------------------------
# naming evaluation


def evaluate_semantics(names: dict[str, list[tuple[str, float]]],
                       clusters: list[ObjectCluster],
                       cluster_to_scene: dict[str, str],
                       good_names: dict[str, set[str]],
                       ok_names: dict[str, set[str]],
                       categories: dict[str, str]) -> MetricReport:
    """Rate mined cluster names against the accepted name sets.

    The top-ranked tag plays the role of the top-1 result and the top three
    tags the top-3 result, so the same four metrics apply. Clusters that
    were too small to name are skipped rather than counted against.
    """
    rows = []
    for cluster in clusters:
        tags = names.get(cluster.object_id, [])
        if not tags:
            continue
        scene = cluster_to_scene[cluster.object_id]
        good = good_names.get(scene, set())
        okay = ok_names.get(scene, set())
        rated = []
        for tag, _ in tags:
            if tag in good:
                rated.append("good")
            elif tag in okay:
                rated.append("ok")
            else:
                rated.append("bad")
        rows.append(GroupRow(category=categories.get(scene, "Uncategorized"),
                             ratings=rated))
    return compute_metrics(rows)


# ---------------------------------------------------------------------------
# report assembly


def config_digest(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def build_report(engine: EngineState, queries: list[ImageRecord],
                 groups: QueryGroups,
                 ratings: dict[tuple[str, str], str],
                 cluster_to_scene: dict[str, str],
                 names: dict[str, list[tuple[str, float]]] | None = None,
                 semantics: MetricReport | None = None,
                 digest: str = "", k: int = 3) -> dict:
    """Assemble the full evaluation report as a plain sorted dict. Contains
    no timestamps or machine identifiers, so identical inputs produce an
    identical file."""
    recognition = {}
    for method in METHODS:
        report = evaluate_recognition(engine, queries, groups, ratings,
                                      cluster_to_scene, method, k=k)
        recognition[method] = report.as_dict()
    out = {
        "config_digest": digest,
        "dataset": {
            "images": len(engine.dataset.image_ids),
            "queries": len(queries),
            "clusters": len(engine.clusters),
            "representatives": len(engine.rep_objects),
        },
        "grouping": {
            "groups": len(groups.members),
            "duplicates_merged": len(groups.assignment) - len(groups.members),
        },
        "recognition": recognition,
    }
    if names is not None:
        out["naming"] = {oid: [[t, round(s, 9)] for t, s in tags]
                         for oid, tags in sorted(names.items())}
    if semantics is not None:
        out["semantics"] = semantics.as_dict()
    return out


def save_report(report: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
