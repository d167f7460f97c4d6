"""Visual vocabulary: k-means training, exact quantization, tf-idf weights.

Training is Lloyd's algorithm with k-means++ seeding, deterministic for a
fixed (sample, K, seed). Quantization is exact nearest-center under L2 with
ties resolved to the lowest word id; the k-d tree path is an acceleration
that must agree with brute force bit for bit on tie-free data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import FormatError, MissingArtifactError, ValidationError

MAGIC = b"LMVC"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIIq")


@dataclass
class Vocabulary:
    centers: np.ndarray          # (K, D) float64
    seed: int
    accel: dict = field(default_factory=lambda: {"kind": "kdtree", "leafsize": 32})

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


@dataclass
class WeightedBovw:
    """Sparse tf-idf vector over visual words. Stored weights are > 0 and,
    for a non-empty image, L2-normalized."""

    weights: dict[int, float]

    def norm(self) -> float:
        return float(np.sqrt(sum(w * w for w in self.weights.values())))

    def __len__(self) -> int:
        return len(self.weights)


def _assign_brute(descriptors: np.ndarray, centers: np.ndarray,
                  block: int = 8192) -> np.ndarray:
    """Exact nearest center per row; argmin picks the lowest index on ties."""
    x = np.asarray(descriptors, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64)
    c_sq = (c * c).sum(axis=1)
    out = np.empty(x.shape[0], dtype=np.int64)
    for start in range(0, x.shape[0], block):
        chunk = x[start:start + block]
        d2 = (chunk * chunk).sum(axis=1)[:, None] - 2.0 * (chunk @ c.T) + c_sq[None, :]
        out[start:start + block] = np.argmin(d2, axis=1)
    return out


def _assign_kdtree(descriptors: np.ndarray, centers: np.ndarray,
                   leafsize: int = 32) -> np.ndarray:
    """Tree-accelerated assignment with a tie fix-up toward the lowest word id."""
    x = np.asarray(descriptors, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64)
    tree = cKDTree(c, leafsize=leafsize, balanced_tree=True)
    k = min(c.shape[0], 8)
    dist, idx = tree.query(x, k=k)
    if k == 1:
        return idx.astype(np.int64)
    dist = np.atleast_2d(dist)
    idx = np.atleast_2d(idx)
    best = dist[:, 0]
    out = np.empty(x.shape[0], dtype=np.int64)
    for i in range(x.shape[0]):
        tied = idx[i][dist[i] <= best[i] * (1.0 + 1e-12) + 1e-12]
        out[i] = tied.min()
    return out


def train_vocab(descriptors: np.ndarray, k: int, seed: int,
                max_iters: int = 50, tol: float = 1e-7) -> Vocabulary:
    """k-means++ then Lloyd iterations until centers stop moving."""
    x = np.asarray(descriptors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValidationError("training needs a non-empty (N, D) descriptor array")
    n = x.shape[0]
    if k < 1 or k > n:
        raise ValidationError(f"K must be in [1, {n}], got {k}")

    rng = np.random.default_rng(seed)
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with picked centers
            raise ValidationError(
                f"only {i} distinct descriptors available for K={k}")
        centers[i] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((x - centers[i]) ** 2).sum(axis=1))

    for _ in range(max_iters):
        assign = _assign_brute(x, centers)
        new_centers = centers.copy()
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, x)
        nonempty = counts > 0
        new_centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        # re-seed empty clusters from the farthest point, lowest index on ties
        for ci in np.where(~nonempty)[0]:
            dist_own = ((x - new_centers[assign]) ** 2).sum(axis=1)
            far = int(np.argmax(dist_own))
            new_centers[ci] = x[far]
            assign[far] = ci
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift < tol:
            break

    if np.unique(centers, axis=0).shape[0] != k:
        raise ValidationError("k-means produced duplicate centers; lower K or add data")
    return Vocabulary(centers=centers, seed=seed)


def quantize(descriptors: np.ndarray, vocab: Vocabulary,
             method: str = "brute") -> np.ndarray:
    """Map descriptors to word ids. 'brute' is the reference; 'kdtree' must
    return identical assignments."""
    x = np.asarray(descriptors, dtype=np.float64)
    if x.size == 0:
        return np.zeros(0, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != vocab.dim:
        raise ValidationError(
            f"descriptors have dimension {x.shape[-1]}, vocabulary has {vocab.dim}")
    if method == "brute":
        return _assign_brute(x, vocab.centers)
    if method == "kdtree":
        return _assign_kdtree(x, vocab.centers, vocab.accel.get("leafsize", 32))
    raise ValidationError(f"unknown quantization method {method!r}")


def compute_idf(word_lists: list[np.ndarray], k: int) -> np.ndarray:
    """idf_w = ln(N / n_w) over image-level occurrence; unseen words get 0."""
    n = len(word_lists)
    df = np.zeros(k, dtype=np.int64)
    for words in word_lists:
        if len(words):
            df[np.unique(words)] += 1
    idf = np.zeros(k, dtype=np.float64)
    seen = df > 0
    idf[seen] = np.log(n / df[seen])
    return idf


def build_bovw(word_ids: np.ndarray, idf: np.ndarray) -> WeightedBovw:
    """tf-idf vector: tf is the relative word frequency, L2-normalized.

    Degenerate-corpus guard: when every word of a non-empty image has idf 0
    (single-image corpora, ubiquitous words) the tf-idf vector would be all
    zero, so plain normalized tf is used instead. See the decisions ledger.
    """
    word_ids = np.asarray(word_ids, dtype=np.int64)
    if word_ids.size == 0:
        return WeightedBovw(weights={})
    words, counts = np.unique(word_ids, return_counts=True)
    tf = counts.astype(np.float64) / word_ids.size
    weights = tf * idf[words]
    norm = np.sqrt((weights * weights).sum())
    if norm == 0.0:
        weights = tf
        norm = np.sqrt((weights * weights).sum())
    weights = weights / norm
    return WeightedBovw(weights={int(w): float(v) for w, v in zip(words, weights) if v > 0})


def save_vocab(vocab: Vocabulary, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, vocab.k, vocab.dim, vocab.seed))
        fh.write(np.ascontiguousarray(vocab.centers, dtype="<f8").tobytes())


def load_vocab(path: str | Path) -> Vocabulary:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(
            f"no vocabulary at {path}; run the vocab stage first", stage="vocab")
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise FormatError("vocabulary file shorter than its header", offset=0)
        magic, version, k, dim, seed = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported vocabulary version {version}", offset=4)
        payload = fh.read(k * dim * 8)
        if len(payload) < k * dim * 8:
            raise FormatError("vocabulary centers truncated",
                              offset=_HEADER.size + len(payload))
        centers = np.frombuffer(payload, dtype="<f8").reshape(k, dim).copy()
    return Vocabulary(centers=centers, seed=seed)
