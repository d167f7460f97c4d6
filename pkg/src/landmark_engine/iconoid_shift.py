"""Medoid shift over homography-overlap distances.

The distance between two images is 1 - overlap, where overlap is measured by
propagating the source frame polygon hop by hop along a graph path (clipping
against every intermediate frame) and comparing surviving area against both
endpoint frames. A truncated-linear kernel of bandwidth beta turns summed
overlaps into the medoid score; the argmax image is the cluster's iconoid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_model import Dataset
from .errors import FormatError, MissingArtifactError, ValidationError
from .geometry import clip_polygon_rect, frame_polygon, map_polygon, polygon_area
from .match_graph import MatchingGraph


@dataclass
class IconoidShiftConfig:
    beta: float = 0.9                 # kernel bandwidth; support needs overlap >= 1-beta
    seed_count: int = 50
    rng_seed: int = 0
    max_iterations: int = 20
    min_support: int = 5              # smaller clusters are kept but flagged
    exploration_floor: float = 0.05   # stop expanding below this overlap
    exploration_depth: int = 300      # retrieval depth the graph was built with
    overlap_mode: str = "min"         # "min" or "target" area-ratio denominator


@dataclass
class ObjectCluster:
    object_id: str
    iconoid: str
    support: dict[str, float]         # image_id -> overlap with the iconoid
    beta: float
    seed_images: list[str] = field(default_factory=list)
    below_min_size: bool = False

    @property
    def size(self) -> int:
        return len(self.support)

    def members(self) -> list[str]:
        return sorted(self.support)


def _propagate(poly: np.ndarray, hops: list[tuple[np.ndarray, float, float]]):
    """Push a polygon through (homography, frame_w, frame_h) hops, clipping at
    each frame. Returns (polygon, list of inverse homographies) or None."""
    inverses = []
    for h, width, height in hops:
        if len(poly) < 3:
            return None
        mapped = map_polygon(h, poly)
        if mapped is None:
            return None
        poly = clip_polygon_rect(mapped, width, height)
        if polygon_area(poly) <= 0.0:
            return None
        inverses.append(np.linalg.inv(h))
    return poly, inverses


def _overlap_fraction(final_poly: np.ndarray, inverses: list[np.ndarray],
                      src_area: float, dst_area: float, mode: str) -> float:
    """min of the two endpoint area ratios (or just the target ratio)."""
    dst_ratio = polygon_area(final_poly) / dst_area
    if mode == "target":
        return float(min(1.0, dst_ratio))
    back = final_poly
    for inv in reversed(inverses):
        back = map_polygon(inv, back)
        if back is None:
            return 0.0
    src_ratio = polygon_area(back) / src_area
    return float(min(1.0, min(src_ratio, dst_ratio)))


def hop_overlap(graph: MatchingGraph, dataset: Dataset, source: str, target: str,
                path: list[str], mode: str = "min") -> float:
    """Overlap fraction between source and target along an explicit path.

    The source frame polygon is mapped edge by edge and clipped against every
    visited frame; an empty intermediate clip means 0. The fraction compares
    the surviving region against both endpoint frames (mode "min") or the
    target frame alone (mode "target").
    """
    if not path or path[0] != source or path[-1] != target:
        raise ValidationError("path must run from source to target")
    src_rec = dataset.get(source)
    if source == target:
        return 1.0
    hops = []
    for a, b in zip(path, path[1:]):
        edge = graph.edge(a, b)
        if edge is None:
            raise ValidationError(f"path uses missing edge ({a}, {b})")
        rec_b = dataset.get(b)
        hops.append((edge.homography(a, b), float(rec_b.width), float(rec_b.height)))
    result = _propagate(frame_polygon(src_rec.width, src_rec.height), hops)
    if result is None:
        return 0.0
    final_poly, inverses = result
    dst_rec = dataset.get(target)
    return _overlap_fraction(final_poly, inverses, src_rec.frame_area(),
                             dst_rec.frame_area(), mode)


class PairOverlapCache:
    """Memoized symmetric pair overlaps over one graph.

    Every pair is evaluated along the canonical tie-ruled shortest path from
    min(id) to max(id) and the value reused in both directions, which keeps
    the overlap distance exactly symmetric (see decisions ledger).
    """

    def __init__(self, graph: MatchingGraph, dataset: Dataset, mode: str = "min"):
        self.graph = graph
        self.dataset = dataset
        self.mode = mode
        self._paths: dict[str, dict[str, list[str]]] = {}
        self._overlaps: dict[tuple[str, str], float] = {}

    def paths_from(self, source: str) -> dict[str, list[str]]:
        cached = self._paths.get(source)
        if cached is None:
            cached = self.graph.single_source_paths(source)
            self._paths[source] = cached
        return cached

    def overlap(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        key = (a, b) if a < b else (b, a)
        value = self._overlaps.get(key)
        if value is None:
            path = self.paths_from(key[0]).get(key[1])
            value = 0.0 if path is None else hop_overlap(
                self.graph, self.dataset, key[0], key[1], path, self.mode)
            self._overlaps[key] = value
        return value


def explore(graph: MatchingGraph, dataset: Dataset, center: str,
            config: IconoidShiftConfig) -> dict[str, float]:
    """Breadth-first overlap exploration outward from a center image.

    Returns {image_id: overlap with center}. Images whose compounded overlap
    drops below the exploration floor are dropped and not expanded, so paths
    stay inside the surviving region.
    """
    floor = config.exploration_floor
    center_rec = dataset.get(center)
    src_area = center_rec.frame_area()
    src_poly = frame_polygon(center_rec.width, center_rec.height)

    # carry the propagated polygon per node so each hop costs one clip;
    # state holds (polygon, inverse chain, path, bottleneck inliers)
    state: dict[str, tuple[np.ndarray, list[np.ndarray], list[str], int]] = {
        center: (src_poly, [], [center], 2 ** 62)}
    overlaps = {center: 1.0}
    dead: set[str] = set()   # fell below the floor; never reconsidered
    frontier = [center]
    while frontier:
        nxt: dict[str, tuple[int, list[str]]] = {}
        for u in sorted(frontier):
            _, _, path_u, bneck_u = state[u]
            for v, edge in graph.adjacency[u].items():
                if v in state or v in dead:
                    continue
                cand = (min(bneck_u, edge.inliers), path_u + [v])
                old = nxt.get(v)
                if old is None or (-cand[0], cand[1]) < (-old[0], old[1]):
                    nxt[v] = cand
        frontier = []
        for v in sorted(nxt):
            bneck_v, path_v = nxt[v]
            u = path_v[-2]
            poly_u, inv_u, _, _ = state[u]
            edge = graph.edge(u, v)
            rec_v = dataset.get(v)
            step = _propagate(poly_u, [(edge.homography(u, v),
                                        float(rec_v.width), float(rec_v.height))])
            if step is None:
                dead.add(v)
                continue
            poly_v, inv_step = step
            inverses = inv_u + inv_step
            value = _overlap_fraction(poly_v, inverses, src_area,
                                      rec_v.frame_area(), config.overlap_mode)
            if value < floor:
                dead.add(v)
                continue
            state[v] = (poly_v, inverses, path_v, bneck_v)
            overlaps[v] = value
            frontier.append(v)
    return overlaps


def medoid_step(candidates: list[str], overlaps: PairOverlapCache,
                beta: float) -> str:
    """argmax over candidates of the truncated-linear kernel score
    sum_z max(0, overlap(y, z) - (1 - beta)); ties go to the smallest id.

    Scores are accumulated with math.fsum so candidates whose kernel terms
    are the same multiset (symmetric positions in the overlap graph) compare
    exactly equal and the id tie rule actually decides, independent of the
    candidate list's order.
    """
    if not candidates:
        raise ValidationError("medoid step over an empty candidate set")
    cutoff = 1.0 - beta
    best_id = None
    best_score = -1.0
    for y in sorted(candidates):
        score = math.fsum(max(0.0, overlaps.overlap(y, z) - cutoff)
                          for z in candidates)
        if score > best_score:
            best_score = score
            best_id = y
    return best_id


def _shift_from_seed(seed_image: str, graph: MatchingGraph, dataset: Dataset,
                     cache: PairOverlapCache, config: IconoidShiftConfig) -> str:
    current = seed_image
    history = {seed_image}
    for _ in range(config.max_iterations):
        candidates = explore(graph, dataset, current, config)
        nxt = medoid_step(list(candidates), cache, config.beta)
        if nxt == current:
            break
        current = nxt
        if nxt in history:
            break   # tiny oscillation; the revisited medoid is the answer
        history.add(nxt)
    return current


def run_clustering(dataset: Dataset, graph: MatchingGraph,
                   config: IconoidShiftConfig,
                   seeds: list[str] | None = None,
                   cache: PairOverlapCache | None = None) -> list[ObjectCluster]:
    """Run medoid shift from every seed and merge runs that converge to the
    same iconoid. Support is the final exploration from the winning iconoid,
    thresholded at overlap >= 1 - beta."""
    if seeds is None:
        rng = np.random.default_rng(config.rng_seed)
        ids = sorted(dataset.image_ids)
        count = min(config.seed_count, len(ids))
        seeds = [ids[i] for i in rng.permutation(len(ids))[:count]]
    for s in seeds:
        if s not in dataset:
            raise ValidationError(f"seed image {s!r} is not in the dataset")
    if cache is None:
        cache = PairOverlapCache(graph, dataset, config.overlap_mode)

    by_iconoid: dict[str, list[str]] = {}
    for seed_image in seeds:
        iconoid = _shift_from_seed(seed_image, graph, dataset, cache, config)
        by_iconoid.setdefault(iconoid, []).append(seed_image)

    clusters = []
    threshold = 1.0 - config.beta
    for iconoid in sorted(by_iconoid):
        exploration = explore(graph, dataset, iconoid, config)
        support = {i: v for i, v in exploration.items() if v >= threshold}
        support[iconoid] = 1.0
        clusters.append(ObjectCluster(
            object_id=f"c.{iconoid}",
            iconoid=iconoid,
            support=support,
            beta=config.beta,
            seed_images=sorted(set(by_iconoid[iconoid])),
            below_min_size=len(support) < config.min_support,
        ))
    return clusters


@dataclass
class SweepEntry:
    seed_count: int
    clusters: list[ObjectCluster]
    n_clusters: int
    n_clusters_min_size: int
    images_covered: int
    images_covered_min_size: int
    per_category: dict[str, int]


def seed_sweep(dataset: Dataset, graph: MatchingGraph, config: IconoidShiftConfig,
               seed_counts: list[int]) -> list[SweepEntry]:
    """Cluster with growing seed prefixes of one seeded permutation.

    Prefix sampling makes coverage monotone by construction and the whole
    sweep reproducible from config.rng_seed.
    """
    if sorted(seed_counts) != list(seed_counts):
        raise ValidationError("seed counts must be ascending")
    rng = np.random.default_rng(config.rng_seed)
    ids = sorted(dataset.image_ids)
    order = [ids[i] for i in rng.permutation(len(ids))]
    cache = PairOverlapCache(graph, dataset, config.overlap_mode)
    entries = []
    for count in seed_counts:
        if count < 1:
            raise ValidationError("seed counts must be positive")
        seeds = order[:min(count, len(order))]
        clusters = run_clustering(dataset, graph, config, seeds=seeds, cache=cache)
        reportable = [c for c in clusters if not c.below_min_size]
        covered_all = set()
        covered_min = set()
        per_category: dict[str, int] = {}
        for cluster in clusters:
            covered_all.update(cluster.support)
            category = dataset.get(cluster.iconoid).category or "Other"
            if not cluster.below_min_size:
                covered_min.update(cluster.support)
                per_category[category] = per_category.get(category, 0) + 1
        entries.append(SweepEntry(
            seed_count=count,
            clusters=clusters,
            n_clusters=len(clusters),
            n_clusters_min_size=len(reportable),
            images_covered=len(covered_all),
            images_covered_min_size=len(covered_min),
            per_category=dict(sorted(per_category.items())),
        ))
    return entries


def save_clusters(clusters: list[ObjectCluster], path: str | Path,
                  config_digest: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"kind": "clusters", "count": len(clusters),
                             "config_digest": config_digest}, sort_keys=True) + "\n")
        for c in clusters:
            fh.write(json.dumps({
                "kind": "cluster",
                "object_id": c.object_id,
                "iconoid": c.iconoid,
                "beta": c.beta,
                "seed_images": c.seed_images,
                "below_min_size": c.below_min_size,
                "support": [[i, float(v)] for i, v in sorted(c.support.items())],
            }, sort_keys=True) + "\n")


def load_clusters(path: str | Path) -> list[ObjectCluster]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(
            f"no clusters at {path}; run the cluster stage first", stage="cluster")
    clusters = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            kind = obj.get("kind")
            if kind == "clusters":
                continue
            if kind != "cluster":
                raise FormatError(f"cluster file line has unknown kind {kind!r}")
            clusters.append(ObjectCluster(
                object_id=obj["object_id"],
                iconoid=obj["iconoid"],
                support={i: float(v) for i, v in obj["support"]},
                beta=float(obj["beta"]),
                seed_images=list(obj["seed_images"]),
                below_min_size=bool(obj["below_min_size"]),
            ))
    return clusters
