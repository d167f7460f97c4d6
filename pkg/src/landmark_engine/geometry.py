"""Descriptor matching, RANSAC homography estimation, spatial verification.

Homographies are 3x3 float64 arrays normalized to Frobenius norm 1 with the
largest-magnitude entry positive, so equal transforms compare equal.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError


@dataclass
class GeometryConfig:
    ratio_test: float = 0.8
    transfer_error_px: float = 4.0
    inlier_threshold: int = 15        # verified means at least this many inliers
    verify_depth: int = 300           # how deep into the ranking verification goes
    min_inliers: int = 4              # below this RANSAC reports no model
    ransac_confidence: float = 0.99
    ransac_max_iters: int = 2000
    ransac_seed: int = 0
    prefilter: bool = True            # spatial-consistency filter before RANSAC
    prefilter_neighbors: int = 10     # q: query-side neighborhood size
    prefilter_required: int = 3       # s: partners that must land in the match-side neighborhood


# ---------------------------------------------------------------------------
# homography helpers

def normalize_homography(h: np.ndarray) -> np.ndarray:
    """Scale to Frobenius norm 1 and flip sign so the largest entry is positive."""
    h = np.asarray(h, dtype=np.float64)
    norm = np.linalg.norm(h)
    if norm == 0.0 or not np.isfinite(norm):
        raise ValidationError("cannot normalize a zero or non-finite homography")
    h = h / norm
    flat = h.ravel()
    idx = int(np.argmax(np.abs(flat)))
    if flat[idx] < 0:
        h = -h
    if abs(np.linalg.det(h)) <= 1e-12:
        raise ValidationError("homography is singular after normalization")
    return h


def invert_homography(h: np.ndarray) -> np.ndarray:
    return normalize_homography(np.linalg.inv(h))


def project(h: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a homography to (n, 2) points. Raises if any point maps to infinity."""
    points = np.asarray(points, dtype=np.float64)
    ones = np.ones((points.shape[0], 1))
    hom = np.hstack([points, ones]) @ h.T
    w = hom[:, 2]
    if np.any(np.abs(w) < 1e-12):
        raise ValidationError("point maps to the line at infinity")
    return hom[:, :2] / w[:, None]


def _dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray | None:
    """Direct linear transform with Hartley normalization. None if degenerate."""
    def normalizer(pts):
        centroid = pts.mean(axis=0)
        d = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
        if d < 1e-12:
            return None
        s = np.sqrt(2.0) / d
        t = np.array([[s, 0, -s * centroid[0]],
                      [0, s, -s * centroid[1]],
                      [0, 0, 1.0]])
        return t

    t_src = normalizer(src)
    t_dst = normalizer(dst)
    if t_src is None or t_dst is None:
        return None
    src_n = project(t_src, src)
    dst_n = project(t_dst, dst)

    n = src.shape[0]
    a = np.zeros((2 * n, 9))
    for i in range(n):
        x, y = src_n[i]
        u, v = dst_n[i]
        a[2 * i] = [-x, -y, -1, 0, 0, 0, u * x, u * y, u]
        a[2 * i + 1] = [0, 0, 0, -x, -y, -1, v * x, v * y, v]
    _, s, vt = np.linalg.svd(a)
    h = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h @ t_src
    if not np.all(np.isfinite(h)):
        return None
    norm = np.linalg.norm(h)
    # the singularity test must see the Frobenius-scaled matrix, the same
    # one normalize_homography checks, or near-singular fits raise instead
    # of counting as degenerate
    if norm == 0.0 or abs(np.linalg.det(h / norm)) <= 1e-12:
        return None
    return normalize_homography(h)


def symmetric_transfer_error(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Per-correspondence sqrt(|dst - H src|^2 + |src - H^-1 dst|^2), in pixels."""
    h_inv = np.linalg.inv(h)
    ones = np.ones((src.shape[0], 1))
    fwd = np.hstack([src, ones]) @ h.T
    bwd = np.hstack([dst, ones]) @ h_inv.T
    err = np.full(src.shape[0], np.inf)
    ok = (np.abs(fwd[:, 2]) > 1e-12) & (np.abs(bwd[:, 2]) > 1e-12)
    fwd_pts = fwd[ok, :2] / fwd[ok, 2:3]
    bwd_pts = bwd[ok, :2] / bwd[ok, 2:3]
    e_fwd = ((fwd_pts - dst[ok]) ** 2).sum(axis=1)
    e_bwd = ((bwd_pts - src[ok]) ** 2).sum(axis=1)
    err[ok] = np.sqrt(e_fwd + e_bwd)
    return err


def _has_collinear_triple(pts: np.ndarray) -> bool:
    # 4 points -> 4 triples; reject if any triangle is (near) degenerate
    for skip in range(4):
        tri = np.delete(pts, skip, axis=0)
        area2 = abs((tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1])
                    - (tri[2, 0] - tri[0, 0]) * (tri[1, 1] - tri[0, 1]))
        scale = max(np.abs(tri).max(), 1.0)
        if area2 < 1e-8 * scale * scale:
            return True
    return False


# ---------------------------------------------------------------------------
# descriptor matching

def match_descriptors(desc_a: np.ndarray, desc_b: np.ndarray,
                      ratio: float = 0.8) -> list[tuple[int, int]]:
    """Lowe ratio test plus mutual-best filtering.

    Returns index pairs (i into a, j into b), one-to-one, ordered by i.
    """
    if desc_a.size == 0 or desc_b.size == 0:
        return []
    a = np.asarray(desc_a, dtype=np.float64)
    b = np.asarray(desc_b, dtype=np.float64)
    # squared L2 distance matrix
    d2 = ((a * a).sum(axis=1)[:, None] - 2.0 * (a @ b.T) + (b * b).sum(axis=1)[None, :])
    np.maximum(d2, 0.0, out=d2)

    best_b_for_a = np.argmin(d2, axis=1)
    best_a_for_b = np.argmin(d2, axis=0)

    pairs = []
    for i in range(a.shape[0]):
        j = int(best_b_for_a[i])
        if int(best_a_for_b[j]) != i:
            continue
        d1 = d2[i, j]
        if b.shape[0] >= 2:
            row = d2[i].copy()
            row[j] = np.inf
            second = row.min()
            if second <= 0.0:
                continue  # exact duplicate descriptor in b, ratio is 1
            if np.sqrt(d1) >= ratio * np.sqrt(second):
                continue
        pairs.append((i, j))
    return pairs


# ---------------------------------------------------------------------------
# RANSAC

def _pair_seed(base: int, *parts: str) -> int:
    digest = hashlib.sha256((":".join([str(base)] + list(parts))).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _spatial_prefilter(src: np.ndarray, dst: np.ndarray, q: int, s: int) -> np.ndarray:
    """Keep correspondences whose local neighborhoods agree on both sides.

    A correspondence survives when at least s of its q nearest query-side
    neighbors have partners inside the q-nearest neighborhood of its own
    partner on the match side.
    """
    n = src.shape[0]
    q = min(q, n - 1)
    if q < 1:
        return np.arange(n)
    d_src = ((src[:, None, :] - src[None, :, :]) ** 2).sum(axis=2)
    d_dst = ((dst[:, None, :] - dst[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d_src, np.inf)
    np.fill_diagonal(d_dst, np.inf)
    nn_src = np.argsort(d_src, axis=1, kind="stable")[:, :q]
    nn_dst = np.argsort(d_dst, axis=1, kind="stable")[:, :q]
    keep = []
    for i in range(n):
        dst_hood = set(nn_dst[i].tolist())
        agree = sum(1 for j in nn_src[i] if int(j) in dst_hood)
        if agree >= s:
            keep.append(i)
    return np.asarray(keep, dtype=int)


def estimate_homography(src: np.ndarray, dst: np.ndarray, config: GeometryConfig,
                        seed: int | None = None) -> tuple[np.ndarray, np.ndarray] | None:
    """RANSAC homography from paired (n, 2) point arrays.

    Returns (H, inlier indices into the input arrays) or None when no model
    reaches config.min_inliers. Fewer than 4 correspondences is an error.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValidationError("correspondences must be two equal (n, 2) arrays")
    n = src.shape[0]
    if n < 4:
        raise ValidationError(f"homography estimation needs at least 4 correspondences, got {n}")

    rng = np.random.default_rng(config.ransac_seed if seed is None else seed)

    pool = np.arange(n)
    if config.prefilter and n > 4:
        filtered = _spatial_prefilter(src, dst, config.prefilter_neighbors,
                                      config.prefilter_required)
        if filtered.size >= 4:
            pool = filtered

    tau = config.transfer_error_px
    best_count = 0
    best_h = None
    max_iters = config.ransac_max_iters
    iters_needed = max_iters
    it = 0
    while it < min(max_iters, iters_needed):
        it += 1
        sample = rng.choice(pool, size=4, replace=False)
        s_src, s_dst = src[sample], dst[sample]
        if _has_collinear_triple(s_src) or _has_collinear_triple(s_dst):
            continue  # degenerate sample, skip without failing
        h = _dlt(s_src, s_dst)
        if h is None:
            continue
        err = symmetric_transfer_error(h, src[pool], dst[pool])
        count = int((err < tau).sum())
        if count > best_count:
            best_count = count
            best_h = h
            w = count / pool.size
            if w >= 1.0:
                iters_needed = it
            elif w > 0:
                denom = np.log(max(1.0 - w ** 4, 1e-12))
                iters_needed = int(np.ceil(np.log(1.0 - config.ransac_confidence) / denom))

    if best_h is None or best_count < max(config.min_inliers, 4):
        return None

    # refit on the consensus set, then re-evaluate inliers over everything
    err_all = symmetric_transfer_error(best_h, src, dst)
    inliers = np.where(err_all < tau)[0]
    if inliers.size >= 4:
        refit = _dlt(src[inliers], dst[inliers])
        if refit is not None:
            err_refit = symmetric_transfer_error(refit, src, dst)
            refit_inliers = np.where(err_refit < tau)[0]
            if refit_inliers.size >= inliers.size:
                best_h, inliers = refit, refit_inliers
    if inliers.size < max(config.min_inliers, 4):
        return None
    return normalize_homography(best_h), inliers


# ---------------------------------------------------------------------------
# verification against a retrieval ranking

def verify_and_rerank(query, ranked, dataset, config: GeometryConfig):
    """Spatially verify the top of a retrieval ranking and reorder it.

    Matches with >= config.inlier_threshold RANSAC inliers are verified and
    move ahead of everything unverified, sorted by inlier count (ties fall
    back to tf-idf score, then image id). The unverified suffix keeps its
    retrieval order. Input list is not modified.
    """
    out = []
    q_desc = query.descriptors()
    q_pos = query.positions()
    for depth, match in enumerate(ranked):
        m = replace(match)
        if depth < config.verify_depth and len(q_desc):
            record = dataset.get(match.image_id)
            pairs = match_descriptors(q_desc, record.descriptors(), config.ratio_test)
            if len(pairs) >= 4:
                ai = np.array([p[0] for p in pairs])
                bi = np.array([p[1] for p in pairs])
                pos_b = record.positions()
                seed = _pair_seed(config.ransac_seed, query.image_id, match.image_id)
                result = estimate_homography(q_pos[ai], pos_b[bi], config, seed=seed)
                if result is not None:
                    h, inliers = result
                    if inliers.size >= config.inlier_threshold:
                        m.verified = True
                        m.inliers = int(inliers.size)
                        m.homography = h
        out.append(m)

    verified = [m for m in out if m.verified]
    unverified = [m for m in out if not m.verified]
    verified.sort(key=lambda m: (-m.inliers, -m.tfidf_score, m.image_id))
    return verified + unverified


# ---------------------------------------------------------------------------
# convex polygon utilities (frames, clipping, areas)

def frame_polygon(width: float, height: float) -> np.ndarray:
    return np.array([[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]])


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area; 0 for fewer than 3 vertices."""
    if poly is None or len(poly) < 3:
        return 0.0
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def map_polygon(h: np.ndarray, poly: np.ndarray) -> np.ndarray | None:
    """Map polygon vertices through a homography; None if any vertex hits infinity
    or crosses it (mixed signs of w), which would fold the region."""
    if poly is None or len(poly) == 0:
        return None
    ones = np.ones((len(poly), 1))
    hom = np.hstack([poly, ones]) @ np.asarray(h, dtype=np.float64).T
    w = hom[:, 2]
    if np.any(np.abs(w) < 1e-12) or (np.any(w > 0) and np.any(w < 0)):
        return None
    return hom[:, :2] / w[:, None]


def clip_polygon_rect(poly: np.ndarray, width: float, height: float) -> np.ndarray:
    """Sutherland-Hodgman clip against the axis-aligned frame rectangle."""
    if poly is None or len(poly) == 0:
        return np.zeros((0, 2))
    # each half-plane as (a, b, c) with a*x + b*y <= c inside
    planes = [(-1.0, 0.0, 0.0), (1.0, 0.0, float(width)),
              (0.0, -1.0, 0.0), (0.0, 1.0, float(height))]
    pts = [tuple(p) for p in np.asarray(poly, dtype=np.float64)]
    for a, b, c in planes:
        if not pts:
            break
        nxt = []
        prev = pts[-1]
        prev_in = a * prev[0] + b * prev[1] <= c
        for cur in pts:
            cur_in = a * cur[0] + b * cur[1] <= c
            if cur_in != prev_in:
                da = a * (cur[0] - prev[0]) + b * (cur[1] - prev[1])
                t = (c - a * prev[0] - b * prev[1]) / da
                nxt.append((prev[0] + t * (cur[0] - prev[0]),
                            prev[1] + t * (cur[1] - prev[1])))
            if cur_in:
                nxt.append(cur)
            prev, prev_in = cur, cur_in
        pts = nxt
    return np.asarray(pts, dtype=np.float64).reshape(-1, 2)


@dataclass
class MatchEdge:
    """An undirected verified match, stored with image_a < image_b.

    Both directions of the homography are kept explicitly so downstream code
    never re-inverts (numeric reproducibility).
    """

    image_a: str
    image_b: str
    h_ab: np.ndarray
    h_ba: np.ndarray
    inliers: int
    correspondences: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if self.image_a >= self.image_b:
            raise ValidationError(
                f"edge endpoints must satisfy image_a < image_b, "
                f"got ({self.image_a}, {self.image_b})"
            )

    def homography(self, src: str, dst: str) -> np.ndarray:
        if src == self.image_a and dst == self.image_b:
            return self.h_ab
        if src == self.image_b and dst == self.image_a:
            return self.h_ba
        raise ValidationError(f"edge ({self.image_a}, {self.image_b}) does not join {src}->{dst}")
