"""Image matching graph: verified pairwise homographies over a dataset.

Nodes are image ids; an edge means the pair passed spatial verification with
at least the build threshold of inliers. Shortest paths minimize hop count,
then maximize the weakest edge's inlier count, then compare node sequences
lexicographically, so every path query has exactly one answer.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .data_model import Dataset
from .errors import FormatError, MissingArtifactError, ValidationError
from .geometry import (GeometryConfig, MatchEdge, _pair_seed, estimate_homography,
                       invert_homography, match_descriptors)
from .retrieval_index import InvertedIndex, query as index_query


class MatchingGraph:
    def __init__(self, nodes: list[str]):
        self.nodes: list[str] = sorted(set(nodes))
        self._node_set = set(self.nodes)
        self.edges: dict[tuple[str, str], MatchEdge] = {}
        self.adjacency: dict[str, dict[str, MatchEdge]] = {n: {} for n in self.nodes}

    def add_edge(self, edge: MatchEdge) -> None:
        if edge.image_a not in self._node_set or edge.image_b not in self._node_set:
            raise ValidationError(
                f"edge ({edge.image_a}, {edge.image_b}) references unknown node"
            )
        self.edges[(edge.image_a, edge.image_b)] = edge
        self.adjacency[edge.image_a][edge.image_b] = edge
        self.adjacency[edge.image_b][edge.image_a] = edge

    def edge(self, a: str, b: str) -> MatchEdge | None:
        if a > b:
            a, b = b, a
        return self.edges.get((a, b))

    def neighbors(self, node: str) -> list[str]:
        return sorted(self.adjacency.get(node, {}))

    def degree(self, node: str) -> int:
        return len(self.adjacency.get(node, {}))

    def homography(self, src: str, dst: str) -> np.ndarray:
        edge = self.edge(src, dst)
        if edge is None:
            raise ValidationError(f"no edge between {src} and {dst}")
        return edge.homography(src, dst)

    def prune(self, min_inliers: int) -> "MatchingGraph":
        """Subgraph keeping only edges with inliers >= min_inliers. Nodes stay."""
        out = MatchingGraph(self.nodes)
        for edge in self.edges.values():
            if edge.inliers >= min_inliers:
                out.add_edge(edge)
        return out

    def connected_components(self) -> list[list[str]]:
        seen: set[str] = set()
        components = []
        for start in self.nodes:
            if start in seen:
                continue
            stack = [start]
            comp = []
            seen.add(start)
            while stack:
                cur = stack.pop()
                comp.append(cur)
                for nbr in self.adjacency[cur]:
                    if nbr not in seen:
                        seen.add(nbr)
                        stack.append(nbr)
            components.append(sorted(comp))
        components.sort(key=lambda c: c[0])
        return components

    def single_source_paths(self, source: str,
                            allowed: set[str] | None = None) -> dict[str, list[str]]:
        """Tie-ruled shortest paths from source to every reachable node.

        Paths are node sequences starting at source. Optionally restricted to
        an allowed node set (source must be allowed).
        """
        if source not in self._node_set:
            raise ValidationError(f"unknown node {source!r}")
        # per node: (bottleneck inliers along best path, path)
        best: dict[str, tuple[int, list[str]]] = {source: (2 ** 62, [source])}
        frontier = [source]
        while frontier:
            nxt: dict[str, tuple[int, list[str]]] = {}
            for u in sorted(frontier):
                bneck_u, path_u = best[u]
                for v, edge in self.adjacency[u].items():
                    if v in best:
                        continue
                    if allowed is not None and v not in allowed:
                        continue
                    cand = (min(bneck_u, edge.inliers), path_u + [v])
                    old = nxt.get(v)
                    # higher bottleneck wins, then lexicographically smaller path
                    if old is None or (-cand[0], cand[1]) < (-old[0], old[1]):
                        nxt[v] = cand
            best.update(nxt)
            frontier = list(nxt)
        return {node: path for node, (_, path) in best.items()}

    def shortest_path(self, a: str, b: str) -> list[str] | None:
        """Minimum-hop node sequence from a to b, or None if disconnected."""
        if a == b:
            if a not in self._node_set:
                raise ValidationError(f"unknown node {a!r}")
            return [a]
        return self.single_source_paths(a).get(b)


def _candidate_pairs(dataset: Dataset, index: InvertedIndex, bovws: dict,
                     depth: int) -> list[tuple[str, str]]:
    pairs: set[tuple[str, str]] = set()
    for image_id in dataset.image_ids:
        ranked = index_query(index, bovws[image_id], k=depth + 1)
        for match in ranked:
            if match.image_id == image_id:
                continue
            a, b = sorted((image_id, match.image_id))
            pairs.add((a, b))
    return sorted(pairs)


def build_graph(dataset: Dataset, index: InvertedIndex, bovws: dict,
                config: GeometryConfig, depth: int | None = None,
                threads: int = 1) -> MatchingGraph:
    """Verify retrieval candidates for every image and keep the passing pairs.

    Candidate pairs come from each image's top retrieval matches; each pair is
    verified once regardless of which side proposed it, so the result does not
    depend on iteration order.
    """
    depth = config.verify_depth if depth is None else depth
    graph = MatchingGraph(dataset.image_ids)
    pairs = _candidate_pairs(dataset, index, bovws, depth)

    def verify(pair: tuple[str, str]) -> MatchEdge | None:
        a, b = pair
        rec_a, rec_b = dataset.get(a), dataset.get(b)
        matched = match_descriptors(rec_a.descriptors(), rec_b.descriptors(),
                                    config.ratio_test)
        if len(matched) < config.inlier_threshold:
            return None
        ai = np.array([p[0] for p in matched])
        bi = np.array([p[1] for p in matched])
        seed = _pair_seed(config.ransac_seed, a, b)
        result = estimate_homography(rec_a.positions()[ai], rec_b.positions()[bi],
                                     config, seed=seed)
        if result is None:
            return None
        h, inlier_idx = result
        if inlier_idx.size < config.inlier_threshold:
            return None
        try:
            h_ba = invert_homography(h)
        except ValidationError:
            # a verification hit whose inverse collapses numerically is a
            # degenerate fit, not a usable edge
            return None
        corr = [matched[int(i)] for i in inlier_idx]
        return MatchEdge(image_a=a, image_b=b, h_ab=h, h_ba=h_ba,
                         inliers=int(inlier_idx.size), correspondences=corr)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(verify, pairs))
    else:
        results = [verify(p) for p in pairs]
    for edge in results:
        if edge is not None:
            graph.add_edge(edge)
    return graph


def save_graph(graph: MatchingGraph, path: str | Path, config_digest: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {"kind": "graph", "nodes": graph.nodes, "config_digest": config_digest}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for (a, b) in sorted(graph.edges):
            edge = graph.edges[(a, b)]
            line = {
                "kind": "edge",
                "a": a,
                "b": b,
                "inliers": edge.inliers,
                "h_ab": [float(v) for v in edge.h_ab.ravel()],
                "h_ba": [float(v) for v in edge.h_ba.ravel()],
                "correspondences": [[int(i), int(j)] for i, j in edge.correspondences],
            }
            fh.write(json.dumps(line, sort_keys=True) + "\n")


def load_graph(path: str | Path) -> MatchingGraph:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(
            f"no matching graph at {path}; run the graph stage first", stage="graph")
    graph = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            kind = obj.get("kind")
            if kind == "graph":
                graph = MatchingGraph(obj["nodes"])
            elif kind == "edge":
                if graph is None:
                    raise FormatError("edge record before graph header")
                graph.add_edge(MatchEdge(
                    image_a=obj["a"], image_b=obj["b"],
                    h_ab=np.array(obj["h_ab"], dtype=np.float64).reshape(3, 3),
                    h_ba=np.array(obj["h_ba"], dtype=np.float64).reshape(3, 3),
                    inliers=int(obj["inliers"]),
                    correspondences=[(int(i), int(j)) for i, j in obj.get("correspondences", [])],
                ))
            else:
                raise FormatError(f"graph line {lineno + 1} has unknown kind {kind!r}")
    if graph is None:
        raise FormatError("graph file has no header line")
    return graph
