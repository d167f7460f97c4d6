"""Vocabulary training, quantization, and BoVW construction."""

import math

import numpy as np
import pytest

from landmark_engine.errors import ValidationError
from landmark_engine.vocabulary import (Vocabulary, build_bovw, compute_idf,
                                        load_vocab, quantize, save_vocab,
                                        train_vocab)
from oracles import idf_table, nearest_centers, tfidf_vector


def test_training_is_deterministic():
    rng = np.random.default_rng(3)
    descs = rng.random((500, 16)).astype(np.float32)
    a = train_vocab(descs, 32, seed=9, max_iters=20)
    b = train_vocab(descs, 32, seed=9, max_iters=20)
    assert np.array_equal(a.centers, b.centers)
    c = train_vocab(descs, 32, seed=10, max_iters=20)
    assert not np.array_equal(a.centers, c.centers)


def test_too_few_distinct_descriptors_rejected():
    descs = np.tile(np.arange(8, dtype=np.float32), (50, 1))
    with pytest.raises(ValidationError, match="distinct"):
        train_vocab(descs, 4, seed=0, max_iters=5)


def test_centers_are_distinct():
    rng = np.random.default_rng(4)
    for trial in range(5):
        descs = rng.random((300, 8)).astype(np.float32)
        vocab = train_vocab(descs, 40, seed=trial, max_iters=25)
        assert len(np.unique(vocab.centers, axis=0)) == 40


def test_quantize_matches_oracle():
    rng = np.random.default_rng(5)
    for trial in range(10):
        centers = rng.random((50, 12))
        descs = rng.random((200, 12)).astype(np.float32)
        vocab = Vocabulary(centers=centers, seed=0)
        assert np.array_equal(quantize(descs, vocab),
                              nearest_centers(descs, centers))


def test_quantize_midpoint_tie_takes_lowest_word():
    centers = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 1.0]])
    vocab = Vocabulary(centers=centers, seed=0)
    # (1, 0) is equidistant from words 0, 1, and 2
    words = quantize(np.array([[1.0, 0.0]], dtype=np.float32), vocab)
    assert words.tolist() == [0]


def test_tree_and_brute_assignments_agree():
    rng = np.random.default_rng(6)
    centers = rng.random((64, 10))
    vocab = Vocabulary(centers=centers, seed=0)
    descs = rng.random((1000, 10)).astype(np.float32)
    tree = quantize(descs, vocab, method="kdtree")
    brute = quantize(descs, vocab, method="brute")
    assert np.array_equal(tree, brute)


def test_idf_values():
    words = [np.array([0, 1]), np.array([1, 2]), np.array([1])]
    idf = compute_idf(words, k=4)
    assert idf[0] == pytest.approx(math.log(3 / 1))
    assert idf[1] == pytest.approx(math.log(3 / 3))
    assert idf[2] == pytest.approx(math.log(3 / 1))
    assert idf[3] == 0.0   # unseen word carries no weight


def test_idf_matches_oracle():
    rng = np.random.default_rng(7)
    k = 30
    word_lists = [rng.integers(0, k, size=rng.integers(1, 40))
                  for _ in range(25)]
    idf = compute_idf(word_lists, k)
    want = idf_table(word_lists)
    for w in range(k):
        assert idf[w] == pytest.approx(want.get(w, 0.0), abs=1e-12)


def test_bovw_hand_case():
    # words: 0 twice, 3 once; idf: [ln2, ., ., ln4]
    idf = np.array([math.log(2), 0.0, 0.0, math.log(4)])
    bovw = build_bovw(np.array([0, 3, 0]), idf)
    raw = {0: (2 / 3) * math.log(2), 3: (1 / 3) * math.log(4)}
    norm = math.sqrt(sum(v * v for v in raw.values()))
    assert bovw.weights == pytest.approx({w: v / norm for w, v in raw.items()})


def test_bovw_matches_oracle():
    rng = np.random.default_rng(8)
    k = 40
    docs = [rng.integers(0, k, size=rng.integers(1, 60)) for _ in range(30)]
    idf = compute_idf(docs, k)
    for words in docs:
        bovw = build_bovw(words, idf)
        want = tfidf_vector(words.tolist(), {w: float(idf[w]) for w in range(k)})
        assert bovw.weights == pytest.approx(want, abs=1e-12)


def test_bovw_zero_idf_falls_back_to_tf():
    # every word appears in every document, so all idf weights vanish
    idf = np.zeros(3)
    bovw = build_bovw(np.array([0, 0, 1]), idf)
    norm = math.sqrt(4 + 1)
    assert bovw.weights == pytest.approx({0: 2 / norm, 1: 1 / norm})


def test_empty_word_list_gives_empty_bovw():
    bovw = build_bovw(np.zeros(0, dtype=np.int64), np.ones(5))
    assert len(bovw) == 0


def test_vocab_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    vocab = train_vocab(rng.random((200, 8)).astype(np.float32), 16,
                        seed=1, max_iters=10)
    save_vocab(vocab, tmp_path / "vocab.npz")
    loaded = load_vocab(tmp_path / "vocab.npz")
    assert np.array_equal(vocab.centers, loaded.centers)
