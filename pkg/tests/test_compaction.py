"""Index compaction: cover-style reducers on clusters with known edge weights."""

import numpy as np
import pytest

from landmark_engine.compaction import (METHODS, CompactionConfig,
                                        complete_link_reduce,
                                        dominating_set_reduce,
                                        fine_iconoid_reduce, kept_summary,
                                        kvq_reduce, load_kept, random_reduce,
                                        reduce_clusters, save_kept,
                                        write_tradeoff_csv)
from landmark_engine.errors import MissingArtifactError, ValidationError
from landmark_engine.geometry import MatchEdge
from landmark_engine.iconoid_shift import ObjectCluster
from landmark_engine.match_graph import MatchingGraph
from oracles import min_cover_size


def weighted_edge(a, b, inliers):
    return MatchEdge(image_a=a, image_b=b, h_ab=np.eye(3), h_ba=np.eye(3),
                     inliers=inliers)


def make_cluster(members, iconoid):
    return ObjectCluster(object_id=f"c.{iconoid}", iconoid=iconoid,
                         support={m: 1.0 for m in members}, beta=0.9)


def random_instance(rng, n_members, n_extra=0, weight_hi=60):
    """A random weighted graph over a cluster plus optional outside nodes."""
    members = [f"m{idx:02d}" for idx in range(n_members)]
    outside = [f"x{idx:02d}" for idx in range(n_extra)]
    nodes = members + outside
    g = MatchingGraph(nodes)
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            if rng.random() < 0.5:
                g.add_edge(weighted_edge(nodes[i], nodes[j],
                                         int(rng.integers(1, weight_hi))))
    iconoid = members[int(rng.integers(n_members))]
    return make_cluster(members, iconoid), g


def covered(kept, member, graph, threshold):
    return member in kept or any(
        (e := graph.edge(member, k)) is not None and e.inliers >= threshold
        for k in kept)


def test_iconoid_always_kept():
    rng = np.random.default_rng(51)
    for trial in range(20):
        cluster, g = random_instance(rng, int(rng.integers(3, 12)))
        assert cluster.iconoid in kvq_reduce(cluster, g, 30)
        assert cluster.iconoid in dominating_set_reduce(cluster, g, 30)
        assert cluster.iconoid in complete_link_reduce(cluster, g, 30)
        assert cluster.iconoid in random_reduce(cluster, 0.3, seed=trial)


def test_complete_link_no_merges_keeps_everyone():
    cluster, _ = make_cluster(["a", "b", "c"], "a"), None
    g = MatchingGraph(["a", "b", "c"])
    g.add_edge(weighted_edge("a", "b", 10))
    cluster = make_cluster(["a", "b", "c"], "a")
    assert complete_link_reduce(cluster, g, 50) == ["a", "b", "c"]


def test_complete_link_collapses_tight_component_to_hub():
    # a-b-c-d complete at >= 40 inliers; d also touches an outside node,
    # giving it the highest unpruned degree
    nodes = ["a", "b", "c", "d", "z"]
    g = MatchingGraph(nodes)
    for i, x in enumerate("abcd"):
        for y in "abcd"[i + 1:]:
            g.add_edge(weighted_edge(x, y, 40))
    g.add_edge(weighted_edge("d", "z", 5))
    cluster = make_cluster(["a", "b", "c", "d"], "a")
    # one 4-member component -> its max-degree member d, plus the iconoid
    assert complete_link_reduce(cluster, g, 40) == ["a", "d"]


def test_complete_link_small_components_kept_whole():
    g = MatchingGraph(["a", "b", "c", "d"])
    g.add_edge(weighted_edge("a", "b", 90))   # pair component
    g.add_edge(weighted_edge("c", "d", 90))   # pair component
    cluster = make_cluster(["a", "b", "c", "d"], "a")
    assert complete_link_reduce(cluster, g, 50) == ["a", "b", "c", "d"]


def test_cover_invariant_all_methods():
    """Every removed member must have a kept neighbor at the method's own
    qualifying threshold."""
    rng = np.random.default_rng(52)
    for trial in range(30):
        cluster, g = random_instance(rng, int(rng.integers(4, 14)), n_extra=3)
        for threshold in (15, 30, 50):
            for kept in (kvq_reduce(cluster, g, threshold),
                         dominating_set_reduce(cluster, g, threshold)):
                for m in cluster.members():
                    assert covered(kept, m, g, threshold)
        # complete-link merges only groups whose cross pairs all clear theta,
        # so kept hubs cover their whole group at theta as well
        for theta in (15, 30, 50):
            kept = complete_link_reduce(cluster, g, theta)
            for m in cluster.members():
                assert covered(kept, m, g, theta)


def test_dominating_set_equals_kvq_at_matching_threshold():
    rng = np.random.default_rng(53)
    for trial in range(25):
        cluster, g = random_instance(rng, int(rng.integers(3, 15)), n_extra=2)
        r = int(rng.choice([15, 30, 50]))
        assert dominating_set_reduce(cluster, g, r) == kvq_reduce(cluster, g, r)


def test_greedy_cover_near_optimal():
    rng = np.random.default_rng(54)
    for trial in range(15):
        cluster, g = random_instance(rng, int(rng.integers(4, 11)))
        r = 30
        kept = kvq_reduce(cluster, g, r)
        cover = {u: {u} | {v for v in cluster.members()
                           if v != u and (e := g.edge(u, v)) is not None
                           and e.inliers >= r}
                 for u in cluster.members()}
        opt = min_cover_size(cluster.members(), cover, cluster.iconoid)
        n = cluster.size
        assert len(kept) <= (1 + np.log(n)) * opt


def test_fine_iconoid_reduce_intersects_support():
    coarse = make_cluster(["a", "b", "c", "d"], "b")
    fine = [make_cluster(["a"], "a"), make_cluster(["c", "d"], "d"),
            make_cluster(["z"], "z")]
    assert fine_iconoid_reduce(coarse, fine) == ["a", "b", "d"]


def test_fine_iconoid_reduce_falls_back_to_coarse_iconoid():
    coarse = make_cluster(["a", "b"], "a")
    assert fine_iconoid_reduce(coarse, [make_cluster(["z"], "z")]) == ["a"]


def test_random_reduce_count_and_determinism():
    cluster = make_cluster([f"m{i}" for i in range(10)], "m3")
    kept = random_reduce(cluster, 0.5, seed=0)
    assert len(kept) == 5
    assert "m3" in kept
    assert random_reduce(cluster, 0.5, seed=0) == kept
    assert any(random_reduce(cluster, 0.5, seed=s) != kept for s in range(1, 6))
    assert random_reduce(cluster, 0.01, seed=0) == ["m3"]
    assert random_reduce(cluster, 1.0, seed=0) == cluster.members()


def test_random_reduce_fraction_validated():
    cluster = make_cluster(["a", "b"], "a")
    for bad in (0.0, -0.2, 1.5):
        with pytest.raises(ValidationError, match="fraction"):
            random_reduce(cluster, bad, seed=0)


def test_reduce_clusters_dispatch_and_theta_override():
    rng = np.random.default_rng(55)
    cluster, g = random_instance(rng, 8)
    for method in METHODS:
        if method == "fine-iconoids":
            continue
        cfg = CompactionConfig(method=method)
        kept = reduce_clusters([cluster], g, cfg)
        assert set(kept) == {cluster.object_id}
    base = CompactionConfig(method="dominating-set")
    loose = reduce_clusters([cluster], g, base, theta=1)
    tight = reduce_clusters([cluster], g, base, theta=10 ** 6)
    assert len(loose[cluster.object_id]) <= len(tight[cluster.object_id])
    assert tight[cluster.object_id] == cluster.members()


def test_fine_iconoids_requires_fine_clusters():
    rng = np.random.default_rng(56)
    cluster, g = random_instance(rng, 5)
    with pytest.raises(ValidationError, match="fine_clusters"):
        reduce_clusters([cluster], g, CompactionConfig(method="fine-iconoids"))


def test_unknown_method_rejected():
    with pytest.raises(ValidationError, match="method"):
        CompactionConfig(method="osmosis")


def test_kept_round_trip(tmp_path):
    kept = {"c.b": ["a", "b"], "c.x": ["x"]}
    save_kept(kept, tmp_path / "kept.jsonl", method="kvq", param="30")
    assert load_kept(tmp_path / "kept.jsonl") == kept
    with pytest.raises(MissingArtifactError):
        load_kept(tmp_path / "absent.jsonl")


def test_kept_summary_fractions():
    clusters = [make_cluster(["a", "b", "c", "d"], "a"),
                make_cluster(["x", "y"], "x")]
    summary = kept_summary(clusters, {"c.a": ["a"], "c.x": ["x", "y"]})
    assert summary == {"members": 6, "kept": 3, "fraction": 0.5}


def test_tradeoff_csv_columns(tmp_path):
    rows = [{"method": "kvq", "param": "30", "kept": 4, "good1": 1.0,
             "ok1": 1.0, "good3": 1.0, "ok3": 1.0, "extra": "ignored"}]
    path = tmp_path / "tradeoff.csv"
    write_tradeoff_csv(rows, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "method,param,kept,good1,ok1,good3,ok3"
    assert lines[1].startswith("kvq,30,4,1.0")
