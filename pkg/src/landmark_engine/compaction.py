"""Index compaction: shrink each cluster's representative set.

Five reducers, all keeping the iconoid:

* complete-link  agglomerate members while every cross-pair has >= theta
                 inliers; components of 3+ collapse to their highest-degree
                 member, pairs and singletons stay whole
* kvq            greedy set cover where u covers v iff inliers(u, v) >= r
* dominating-set greedy dominating set on the theta-pruned subgraph
* fine-iconoids  iconoids of a finer (beta = 0.7) clustering that fall into
                 the coarse support
* random         seeded uniform sample, baseline for the tradeoff curve

kvq with r = theta and dominating-set at theta are the same computation by
construction; a test pins that.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data_model import Dataset
from .errors import MissingArtifactError, ValidationError
from .iconoid_shift import IconoidShiftConfig, ObjectCluster, run_clustering
from .match_graph import MatchingGraph

METHODS = ("complete-link", "kvq", "dominating-set", "fine-iconoids", "random")


@dataclass
class CompactionConfig:
    method: str = "dominating-set"
    edge_thresholds: list[int] = field(default_factory=lambda: [15, 30, 50])
    kvq_radius: int = 30
    fine_beta: float = 0.7
    keep_fraction: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(
                f"unknown compaction method {self.method!r}; expected one of {METHODS}")


def _pair_inliers(graph: MatchingGraph, a: str, b: str) -> int:
    edge = graph.edge(a, b)
    return edge.inliers if edge is not None else 0


def complete_link_reduce(cluster: ObjectCluster, graph: MatchingGraph,
                         theta: int) -> list[str]:
    """Complete-link agglomeration at inlier threshold theta.

    Components that reach 3 members collapse to the member with the most
    neighbors in the unpruned matching graph; 1- and 2-member components are
    kept whole. The iconoid is always retained.
    """
    members = cluster.members()
    groups: list[list[str]] = [[m] for m in members]
    while len(groups) > 1:
        best = None
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                worst = min(_pair_inliers(graph, a, b)
                            for a in groups[i] for b in groups[j])
                key = (-worst, groups[i][0], groups[j][0])
                if best is None or key < best[0]:
                    best = (key, i, j, worst)
        if best is None or best[3] < theta:
            break
        _, i, j, _ = best
        merged = sorted(groups[i] + groups[j])
        groups = [g for idx, g in enumerate(groups) if idx not in (i, j)]
        groups.append(merged)
        groups.sort(key=lambda g: g[0])

    kept: set[str] = set()
    for group in groups:
        if len(group) >= 3:
            kept.add(min(group, key=lambda m: (-graph.degree(m), m)))
        else:
            kept.update(group)
    kept.add(cluster.iconoid)
    return sorted(kept)


def _greedy_cover(members: list[str], cover: dict[str, set[str]],
                  forced: str) -> list[str]:
    """Greedy set cover over closed neighborhoods, pre-seeded with the forced
    element. Ties go to the larger remaining gain, then the smaller id."""
    uncovered = set(members)
    kept = [forced]
    uncovered -= cover[forced]
    while uncovered:
        # every uncovered u has u in cover[u], so the best gain is >= 1
        best = min(members, key=lambda m: (-len(cover[m] & uncovered), m))
        kept.append(best)
        uncovered -= cover[best]
    return sorted(set(kept))


def kvq_reduce(cluster: ObjectCluster, graph: MatchingGraph, radius: int) -> list[str]:
    """Kernel vector quantization: kept images must cover every member within
    inlier radius r (u covers v iff u = v or inliers(u, v) >= r)."""
    members = cluster.members()
    cover = {u: {u} | {v for v in members
                       if v != u and _pair_inliers(graph, u, v) >= radius}
             for u in members}
    return _greedy_cover(members, cover, cluster.iconoid)


def dominating_set_reduce(cluster: ObjectCluster, graph: MatchingGraph,
                          theta: int) -> list[str]:
    """Greedy dominating set over closed neighborhoods of the theta-pruned
    subgraph restricted to the cluster."""
    members = cluster.members()
    member_set = set(members)
    cover = {}
    for u in members:
        hood = {u}
        for v, edge in graph.adjacency.get(u, {}).items():
            if v in member_set and edge.inliers >= theta:
                hood.add(v)
        cover[u] = hood
    return _greedy_cover(members, cover, cluster.iconoid)


def fine_iconoid_reduce(cluster: ObjectCluster,
                        fine_clusters: list[ObjectCluster]) -> list[str]:
    """Keep the fine-clustering iconoids that fall inside the coarse support;
    the coarse iconoid backstops empty intersections."""
    kept = {f.iconoid for f in fine_clusters if f.iconoid in cluster.support}
    kept.add(cluster.iconoid)
    return sorted(kept)


def random_reduce(cluster: ObjectCluster, fraction: float, seed: int) -> list[str]:
    if not (0.0 < fraction <= 1.0):
        raise ValidationError(f"keep fraction must be in (0, 1], got {fraction}")
    members = cluster.members()
    count = max(1, int(round(fraction * len(members))))
    digest = hashlib.sha256(f"{seed}:{cluster.object_id}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    others = [m for m in members if m != cluster.iconoid]
    picked = list(rng.permutation(others)[:count - 1]) if count > 1 else []
    return sorted(set(picked) | {cluster.iconoid})


def run_fine_clustering(dataset: Dataset, graph: MatchingGraph,
                        base: IconoidShiftConfig, fine_beta: float) -> list[ObjectCluster]:
    """Second clustering pass at a tighter bandwidth, seeded from every image
    so the collection is covered at fine granularity."""
    fine_config = replace(base, beta=fine_beta, min_support=1)
    return run_clustering(dataset, graph, fine_config,
                          seeds=sorted(dataset.image_ids))


def reduce_clusters(clusters: list[ObjectCluster], graph: MatchingGraph,
                    config: CompactionConfig, theta: int | None = None,
                    fine_clusters: list[ObjectCluster] | None = None) -> dict[str, list[str]]:
    """Apply the configured reducer to every cluster; returns object_id -> kept."""
    kept: dict[str, list[str]] = {}
    for cluster in clusters:
        if config.method == "complete-link":
            kept[cluster.object_id] = complete_link_reduce(
                cluster, graph, theta if theta is not None else config.edge_thresholds[0])
        elif config.method == "kvq":
            kept[cluster.object_id] = kvq_reduce(
                cluster, graph, theta if theta is not None else config.kvq_radius)
        elif config.method == "dominating-set":
            kept[cluster.object_id] = dominating_set_reduce(
                cluster, graph, theta if theta is not None else config.edge_thresholds[0])
        elif config.method == "fine-iconoids":
            if fine_clusters is None:
                raise ValidationError("fine-iconoids reduction needs fine_clusters")
            kept[cluster.object_id] = fine_iconoid_reduce(cluster, fine_clusters)
        else:
            kept[cluster.object_id] = random_reduce(
                cluster, config.keep_fraction, config.rng_seed)
    return kept


def kept_summary(clusters: list[ObjectCluster], kept: dict[str, list[str]]) -> dict:
    total = sum(c.size for c in clusters)
    kept_total = sum(len(v) for v in kept.values())
    return {"members": total, "kept": kept_total,
            "fraction": kept_total / total if total else 0.0}


def save_kept(kept: dict[str, list[str]], path: str | Path, method: str = "",
              param: str = "", config_digest: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"kind": "kept", "method": method, "param": param,
                             "config_digest": config_digest}, sort_keys=True) + "\n")
        for object_id in sorted(kept):
            fh.write(json.dumps({"kind": "cluster", "object_id": object_id,
                                 "kept": kept[object_id]}, sort_keys=True) + "\n")


def load_kept(path: str | Path) -> dict[str, list[str]]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(
            f"no kept-set file at {path}; run the compact stage first", stage="compact")
    kept = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj.get("kind") == "cluster":
                kept[obj["object_id"]] = list(obj["kept"])
    return kept


def write_tradeoff_csv(rows: list[dict], path: str | Path) -> None:
    fields = ["method", "param", "kept", "good1", "ok1", "good3", "ok3"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in fields})
