"""Assembles the full engine from a dataset: vocabulary, indexes, matching
graph, clusters, recognition state. The CLI stages and the evaluation
harness both build on these pieces."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_model import Dataset
from .errors import ValidationError
from .geometry import GeometryConfig
from .iconoid_shift import IconoidShiftConfig, ObjectCluster, run_clustering
from .match_graph import MatchingGraph, build_graph
from .recognition import EngineState
from .retrieval_index import InvertedIndex, build_index
from .vocabulary import Vocabulary, build_bovw, compute_idf, quantize, train_vocab


@dataclass
class VocabConfig:
    k: int = 1000
    seed: int = 7
    max_iters: int = 50
    sample_cap: int | None = None    # cap on training descriptors
    sample_seed: int = 11


@dataclass
class EngineConfig:
    vocab: VocabConfig = field(default_factory=VocabConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    clustering: IconoidShiftConfig = field(default_factory=IconoidShiftConfig)
    threads: int = 1


def collect_training_descriptors(dataset: Dataset, cap: int | None = None,
                                 seed: int = 11) -> np.ndarray:
    blocks = [dataset.get(i).descriptors() for i in dataset.image_ids]
    blocks = [b for b in blocks if b.size]
    if not blocks:
        raise ValidationError("dataset has no descriptors to train on")
    descs = np.vstack(blocks)
    if cap is not None and descs.shape[0] > cap:
        rng = np.random.default_rng(seed)
        descs = descs[np.sort(rng.choice(descs.shape[0], size=cap, replace=False))]
    return descs


def quantize_dataset(dataset: Dataset, vocab: Vocabulary) -> dict[str, np.ndarray]:
    return {i: quantize(dataset.get(i).descriptors(), vocab)
            if dataset.get(i).features else np.zeros(0, dtype=np.int64)
            for i in dataset.image_ids}


def build_corpus_index(image_ids: list[str], words: dict[str, np.ndarray],
                       k: int) -> tuple[InvertedIndex, np.ndarray]:
    """Index a sub-corpus with idf computed over that sub-corpus."""
    idf = compute_idf([words[i] for i in image_ids], k)
    bovws = [(i, build_bovw(words[i], idf)) for i in image_ids]
    return build_index(bovws, idf), idf


def representative_map(clusters: list[ObjectCluster],
                       kept: dict[str, list[str]] | None = None) -> dict[str, list[str]]:
    """image -> sorted object ids it represents; optionally restricted to a
    per-cluster kept subset (compaction)."""
    rep_objects: dict[str, list[str]] = {}
    for cluster in clusters:
        members = kept[cluster.object_id] if kept is not None else cluster.members()
        for image_id in members:
            rep_objects.setdefault(image_id, []).append(cluster.object_id)
    return {i: sorted(objs) for i, objs in rep_objects.items()}


def build_recognition_state(dataset: Dataset, vocab: Vocabulary,
                            words: dict[str, np.ndarray], graph: MatchingGraph,
                            clusters: list[ObjectCluster], geometry: GeometryConfig,
                            clustering: IconoidShiftConfig,
                            kept: dict[str, list[str]] | None = None) -> EngineState:
    rep_objects = representative_map(clusters, kept)
    rep_ids = sorted(rep_objects)
    rep_index, rep_idf = build_corpus_index(rep_ids, words, vocab.k)
    iconoid_ids = sorted({c.iconoid for c in clusters})
    iconoid_index, iconoid_idf = build_corpus_index(iconoid_ids, words, vocab.k)
    return EngineState(
        dataset=dataset, vocab=vocab, geometry=geometry, clustering=clustering,
        graph=graph, clusters=clusters,
        rep_index=rep_index, rep_idf=rep_idf,
        iconoid_index=iconoid_index, iconoid_idf=iconoid_idf,
        rep_objects=rep_objects, words=words,
    )


def build_engine(dataset: Dataset, config: EngineConfig,
                 seeds: list[str] | None = None) -> EngineState:
    """Dataset in, ready-to-query engine out. Deterministic given the config."""
    descs = collect_training_descriptors(dataset, config.vocab.sample_cap,
                                         config.vocab.sample_seed)
    k = min(config.vocab.k, descs.shape[0])
    vocab = train_vocab(descs, k, config.vocab.seed, config.vocab.max_iters)
    words = quantize_dataset(dataset, vocab)
    full_index, full_idf = build_corpus_index(dataset.image_ids, words, vocab.k)
    bovws = {i: build_bovw(words[i], full_idf) for i in dataset.image_ids}
    graph = build_graph(dataset, full_index, bovws, config.geometry,
                        depth=config.clustering.exploration_depth,
                        threads=config.threads)
    clusters = run_clustering(dataset, graph, config.clustering, seeds=seeds)
    return build_recognition_state(dataset, vocab, words, graph, clusters,
                                   config.geometry, config.clustering)
