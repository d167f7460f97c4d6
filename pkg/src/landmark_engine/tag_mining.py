"""Cluster naming from user-supplied photo tags.

Raw tags are noisy: misspellings, camera filenames, generic travel words, and
the occasional user who stamps every upload with the same label. Cleaning is
mechanical (lowercase, trim, stoplist, filename filter, title promotion); the
ranking then counts distinct users instead of raw occurrences, so one
enthusiastic spammer weighs the same as any other single user.

A tag's score for a cluster is

    score(c, t) = (U(c, t) / U(t)) * U(c, t)

where U(c, t) is the number of distinct users who applied t to an image in c
and U(t) the number of distinct users who applied t anywhere. The first
factor rewards locality, the second absolute support.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

from .data_model import Dataset
from .iconoid_shift import ObjectCluster

STOPLIST = frozenset({"paris", "france", "europe", "vacation", "photo", "canon"})

# camera roll artifacts: "dsc002342.jpg" style names, or bare frame counters
_FILENAME = re.compile(
    r"^(?:[a-z]+[-_]?\d+\.(?:jpe?g|png|tiff?|bmp|gif)|\d+)$")

MIN_CLUSTER_SIZE = 6
TOP_TAGS = 3


def clean_tag(raw: str) -> str | None:
    """Normalize one tag; None means it is dropped."""
    tag = raw.strip().lower()
    if not tag:
        return None
    if tag in STOPLIST:
        return None
    if _FILENAME.match(tag):
        return None
    return tag


def preprocess_tags(tags: list[str], title: str = "") -> list[str]:
    """Clean a tag list, treating the image title as one extra tag.

    Order is preserved and duplicates within one image collapse, so a user
    repeating a tag on the same photo still counts once.
    """
    seen: dict[str, None] = {}
    for raw in list(tags) + ([title] if title else []):
        tag = clean_tag(raw)
        if tag is not None and tag not in seen:
            seen[tag] = None
    return list(seen)


@dataclass
class TagStats:
    """Distinct-user counts per tag, globally and per cluster."""

    users_by_tag: dict[str, set[str]] = field(default_factory=dict)
    users_by_cluster_tag: dict[str, dict[str, set[str]]] = field(default_factory=dict)

    def add(self, cluster_id: str | None, tag: str, user: str) -> None:
        self.users_by_tag.setdefault(tag, set()).add(user)
        if cluster_id is not None:
            by_tag = self.users_by_cluster_tag.setdefault(cluster_id, {})
            by_tag.setdefault(tag, set()).add(user)

    def score(self, cluster_id: str, tag: str) -> float:
        total = len(self.users_by_tag.get(tag, ()))
        if total == 0:
            return 0.0
        local = len(self.users_by_cluster_tag.get(cluster_id, {}).get(tag, ()))
        return (local / total) * local


def collect_stats(dataset: Dataset, clusters: list[ObjectCluster]) -> TagStats:
    """Tally distinct users per tag over the whole collection and per cluster.

    Global counts include every image, clustered or not, so a tag that is
    popular outside a cluster is properly diluted.
    """
    membership: dict[str, str] = {}
    for cluster in clusters:
        for image_id in cluster.members():
            membership[image_id] = cluster.object_id
    stats = TagStats()
    for record in dataset:
        user = record.owner_id or record.image_id
        for tag in preprocess_tags(record.tags, record.title):
            stats.add(membership.get(record.image_id), tag, user)
    return stats


def name_cluster(stats: TagStats, cluster: ObjectCluster,
                 top: int = TOP_TAGS) -> list[tuple[str, float]]:
    tags = stats.users_by_cluster_tag.get(cluster.object_id, {})
    scored = [(tag, stats.score(cluster.object_id, tag)) for tag in tags]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:top]


def name_clusters(dataset: Dataset, clusters: list[ObjectCluster],
                  min_size: int = MIN_CLUSTER_SIZE,
                  top: int = TOP_TAGS) -> dict[str, list[tuple[str, float]]]:
    """Top tag candidates per cluster; clusters below min_size get no name,
    their tag evidence being too thin to trust."""
    stats = collect_stats(dataset, clusters)
    names: dict[str, list[tuple[str, float]]] = {}
    for cluster in clusters:
        if cluster.size < min_size:
            names[cluster.object_id] = []
        else:
            names[cluster.object_id] = name_cluster(stats, cluster, top)
    return names


def write_tags_csv(names: dict[str, list[tuple[str, float]]],
                   path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["object_id", "rank", "tag", "score"])
        for object_id in sorted(names):
            for rank, (tag, score) in enumerate(names[object_id], start=1):
                writer.writerow([object_id, rank, tag, f"{score:.6f}"])
