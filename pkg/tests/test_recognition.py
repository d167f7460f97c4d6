"""The five object scoring methods on rendered scenes."""

import numpy as np
import pytest

from landmark_engine.data_model import ImageRecord, LocalFeature
from landmark_engine.errors import ValidationError
from landmark_engine.recognition import METHODS, recognize


def test_method_catalog():
    assert set(METHODS) == {"center", "size", "voting", "best-match", "overlap"}


def test_unknown_method_rejected(flat_trio):
    q = flat_trio.queries.get(flat_trio.queries.image_ids[0])
    with pytest.raises(ValidationError, match="method"):
        recognize(q, flat_trio.engine, method="psychic")


def test_non_positive_k_rejected(flat_trio):
    q = flat_trio.queries.get(flat_trio.queries.image_ids[0])
    with pytest.raises(ValidationError, match="k"):
        recognize(q, flat_trio.engine, method="voting", k=0)


def test_every_method_solves_disjoint_flat_queries(flat_trio):
    gt = flat_trio.ground_truth
    engine = flat_trio.engine
    cluster_object = {c.object_id: gt.primary_object(c.iconoid)
                      for c in engine.clusters}
    for qid in flat_trio.queries.image_ids:
        record = flat_trio.queries.get(qid)
        want = gt.primary_object(qid)
        for method in METHODS:
            scores = recognize(record, engine, method=method, k=3)
            assert scores, f"{method} returned nothing for {qid}"
            assert cluster_object[scores[0].object_id] == want
            values = [s.score for s in scores]
            assert values == sorted(values, reverse=True) or method == "size"


def test_results_respect_k(flat_trio):
    q = flat_trio.queries.get(flat_trio.queries.image_ids[0])
    for method in METHODS:
        assert len(recognize(q, flat_trio.engine, method=method, k=1)) <= 1
        assert len(recognize(q, flat_trio.engine, method=method, k=3)) <= 3


def test_center_consults_only_iconoids(flat_trio):
    engine = flat_trio.engine
    iconoids = sorted(c.iconoid for c in engine.clusters)
    assert engine.iconoid_index.image_ids == iconoids
    # and the full representative index is strictly larger on this scene
    assert len(engine.rep_index.image_ids) > len(iconoids)


def scrambled_query(record, seed):
    """Same descriptors, random positions: retrieval fires, geometry cannot."""
    rng = np.random.default_rng(seed)
    feats = [LocalFeature(x=float(rng.uniform(0, record.width)),
                          y=float(rng.uniform(0, record.height)),
                          scale=f.scale, orientation=f.orientation,
                          descriptor=f.descriptor)
             for f in record.features]
    return ImageRecord(image_id="scrambled", width=record.width,
                       height=record.height, features=feats)


def test_voting_falls_back_to_first_retrieval_match(flat_trio):
    gt = flat_trio.ground_truth
    engine = flat_trio.engine
    qid = flat_trio.queries.image_ids[0]
    q = scrambled_query(flat_trio.queries.get(qid), seed=1)
    scores = recognize(q, engine, method="voting", k=3)
    assert len(scores) == 1
    assert not scores[0].verified
    # tf-idf still points at the right object even without geometry
    cluster_object = {c.object_id: gt.primary_object(c.iconoid)
                      for c in engine.clusters}
    assert cluster_object[scores[0].object_id] == gt.primary_object(qid)


def test_verified_only_scorers_return_nothing_without_geometry(flat_trio):
    qid = flat_trio.queries.image_ids[0]
    q = scrambled_query(flat_trio.queries.get(qid), seed=2)
    for method in ("size", "overlap"):
        assert recognize(q, flat_trio.engine, method=method, k=3) == []


def test_size_prefers_larger_cluster(facade_detail):
    """A detail query retrieves both basins; size must put the facade first
    even though the detail fits better."""
    gt = facade_detail.ground_truth
    engine = facade_detail.engine
    facade_cluster = next(c for c in engine.clusters if c.size == 40)
    for qid in facade_detail.queries.image_ids:
        scores = recognize(facade_detail.queries.get(qid), engine,
                           method="size", k=3)
        assert scores[0].object_id == facade_cluster.object_id
        assert scores[0].score == 40.0


def test_overlap_prefers_snug_cluster(facade_detail):
    gt = facade_detail.ground_truth
    engine = facade_detail.engine
    detail_cluster = next(c for c in engine.clusters if c.size == 8)
    for qid in facade_detail.queries.image_ids:
        scores = recognize(facade_detail.queries.get(qid), engine,
                           method="overlap", k=3)
        assert scores[0].object_id == detail_cluster.object_id
        assert scores[0].score > 0.8


def test_best_match_tracks_strongest_verified_pair(flat_trio):
    gt = flat_trio.ground_truth
    engine = flat_trio.engine
    cluster_object = {c.object_id: gt.primary_object(c.iconoid)
                      for c in engine.clusters}
    for qid in flat_trio.queries.image_ids:
        scores = recognize(flat_trio.queries.get(qid), engine,
                           method="best-match", k=3)
        assert cluster_object[scores[0].object_id] == gt.primary_object(qid)
        assert scores[0].verified
        assert scores[0].score >= engine.geometry.inlier_threshold


def test_empty_query_returns_nothing(flat_trio):
    empty = ImageRecord(image_id="void", width=64, height=64, features=[])
    for method in METHODS:
        assert recognize(empty, flat_trio.engine, method=method, k=3) == []
