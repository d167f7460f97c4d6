"""Shared scene fixtures.

Rendered scenes are expensive enough to share (a second or two each), so the
common ones are session-scoped. Every fixture pins its generator seed and
engine parameters; tests must not mutate the returned handles.
"""

from __future__ import annotations

import dataclasses

import pytest

from landmark_engine.eval_harness import (annotation_lookup, group_queries,
                                          map_clusters_to_scene)
from landmark_engine.geometry import GeometryConfig
from landmark_engine.iconoid_shift import IconoidShiftConfig
from landmark_engine.pipeline import EngineConfig, VocabConfig, build_engine
from landmark_engine.synthgen import (DetailConfig, GeneratorConfig, NoiseConfig,
                                      ObjectGroupConfig, generate_dataset)


@dataclasses.dataclass
class SceneHandle:
    dataset: object
    queries: object
    ground_truth: object
    engine: object
    engine_config: EngineConfig
    _recognition: tuple | None = None

    def recognition_setup(self):
        """(query records, query groups, ratings, cluster -> scene object)."""
        if self._recognition is None:
            gt = self.ground_truth
            records = [self.queries.get(i) for i in self.queries.image_ids]
            groups = group_queries(records, self.engine.vocab,
                                   self.engine_config.geometry)
            ratings = annotation_lookup(gt.annotation_rows())
            scene_of = map_clusters_to_scene(
                self.engine.clusters,
                {i: im.object_id for i, im in gt.images.items()})
            self._recognition = (records, groups, ratings, scene_of)
        return self._recognition


def build_scene(groups, *, gen_seed, dim=40, sigma=0.005, dropout=0.02,
                distractors=2, vocab_k=400, vocab_iters=25, depth=60,
                beta=0.9, floor=0.05, min_support=5, cluster_rng=1,
                seeds="all", tag_profile=None, spam_owner=False) -> SceneHandle:
    gen_kwargs = dict(
        descriptor_dim=dim,
        noise=NoiseConfig(descriptor_sigma=sigma, dropout=dropout,
                          distractors=distractors),
        groups=groups,
    )
    if tag_profile is not None:
        gen_kwargs["tags"] = tag_profile
    if spam_owner:
        gen_kwargs["spam_owner"] = True
    result = generate_dataset(GeneratorConfig(**gen_kwargs), seed=gen_seed)
    config = EngineConfig(
        vocab=VocabConfig(k=vocab_k, seed=7, max_iters=vocab_iters),
        geometry=GeometryConfig(verify_depth=depth),
        clustering=IconoidShiftConfig(beta=beta, exploration_floor=floor,
                                      exploration_depth=depth,
                                      min_support=min_support,
                                      rng_seed=cluster_rng),
    )
    if seeds == "all":
        seed_list = sorted(result.dataset.image_ids)
    else:
        seed_list = seeds
    engine = build_engine(result.dataset, config, seeds=seed_list)
    return SceneHandle(dataset=result.dataset, queries=result.queries,
                       ground_truth=result.ground_truth, engine=engine,
                       engine_config=config)


@pytest.fixture(scope="session")
def flat_trio():
    """Three disjoint flat objects, ten views and three queries each."""
    return build_scene(
        [ObjectGroupConfig(archetype="flat-small", count=3, views=10,
                           queries=3, features=50)],
        gen_seed=5)


@pytest.fixture(scope="session")
def solid_pair():
    """Two four-faced 3D buildings with a dominant front face."""
    return build_scene(
        [ObjectGroupConfig(archetype="solid-3d", count=2, views=12, queries=8,
                           features=80, faces=4,
                           face_weights=[0.55, 0.15, 0.15, 0.15])],
        gen_seed=5)


@pytest.fixture(scope="session")
def facade_detail():
    """One facade photographed 40 times plus a quarter-width detail crop.

    The exploration floor sits between the detail/facade overlap (~0.06) and
    the support threshold, which keeps the two basins separate.
    """
    return build_scene(
        [ObjectGroupConfig(
            archetype="flat-large", count=1, views=40, features=120, queries=0,
            details=DetailConfig(count=1, features=30, views=8, queries=3,
                                 rect_w=0.25, rect_h=0.25))],
        gen_seed=5, vocab_k=500, floor=0.08)


@pytest.fixture(scope="session")
def mixed_suite():
    """The standard mixed scene: facade, two small walls, a 3D building and a
    panorama. Used by the compaction tradeoff criterion."""
    return build_scene(
        [ObjectGroupConfig(archetype="flat-large", count=1, views=12,
                           queries=3, features=70),
         ObjectGroupConfig(archetype="flat-small", count=2, views=8,
                           queries=2, features=40),
         ObjectGroupConfig(archetype="solid-3d", count=1, views=10, queries=2,
                           features=64, faces=4,
                           face_weights=[0.55, 0.15, 0.15, 0.15]),
         ObjectGroupConfig(archetype="panorama", count=1, views=8, queries=2,
                           features=90)],
        gen_seed=20, dim=48, sigma=0.01, dropout=0.05, distractors=4,
        vocab_k=400, vocab_iters=30, depth=50, cluster_rng=3)
