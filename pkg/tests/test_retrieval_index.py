"""Inverted index against the brute-force cosine oracle."""

import numpy as np
import pytest

from landmark_engine.errors import ValidationError
from landmark_engine.retrieval_index import (build_index, load_index, query,
                                             save_index)
from landmark_engine.vocabulary import build_bovw, compute_idf
from oracles import cosine_ranking, tfidf_vector


def random_corpus(rng, n_docs, k, max_len=60):
    docs = {f"img-{i:03d}": rng.integers(0, k, size=rng.integers(1, max_len))
            for i in range(n_docs)}
    idf = compute_idf(list(docs.values()), k)
    bovws = {i: build_bovw(w, idf) for i, w in docs.items()}
    return docs, idf, bovws


def test_ranking_matches_oracle_across_corpora():
    rng = np.random.default_rng(11)
    for trial in range(8):
        k = int(rng.integers(20, 80))
        docs, idf, bovws = random_corpus(rng, int(rng.integers(10, 60)), k)
        index = build_index(sorted(bovws.items()), idf)
        vectors = {i: dict(b.weights) for i, b in bovws.items()}
        for qid in list(docs)[:10]:
            got = query(index, bovws[qid], k=10)
            want = cosine_ranking(vectors, vectors[qid], k=10)
            assert [m.image_id for m in got] == [i for _, i in want]
            for m, (score, _) in zip(got, want):
                assert m.tfidf_score == pytest.approx(score, abs=1e-12)


def test_self_similarity_is_one():
    rng = np.random.default_rng(12)
    docs, idf, bovws = random_corpus(rng, 20, 40)
    index = build_index(sorted(bovws.items()), idf)
    for qid in docs:
        top = query(index, bovws[qid], k=1)[0]
        assert top.image_id == qid
        assert top.tfidf_score == pytest.approx(1.0, abs=1e-12)


def test_scores_never_exceed_one():
    rng = np.random.default_rng(13)
    docs, idf, bovws = random_corpus(rng, 40, 25, max_len=8)
    index = build_index(sorted(bovws.items()), idf)
    for qid in list(docs)[:15]:
        for m in query(index, bovws[qid], k=40):
            assert m.tfidf_score <= 1.0


def test_exact_ties_break_by_image_id():
    idf = np.zeros(4)
    same = build_bovw(np.array([1, 2]), idf)
    index = build_index([("b", same), ("a", same), ("c", same)], idf)
    got = [m.image_id for m in query(index, same, k=3)]
    assert got == ["a", "b", "c"]


def test_topk_is_prefix_of_larger_k():
    rng = np.random.default_rng(14)
    docs, idf, bovws = random_corpus(rng, 30, 30)
    index = build_index(sorted(bovws.items()), idf)
    for qid in list(docs)[:8]:
        five = [m.image_id for m in query(index, bovws[qid], k=5)]
        ten = [m.image_id for m in query(index, bovws[qid], k=10)]
        assert ten[:5] == five


def test_duplicate_ids_rejected():
    idf = np.ones(4)
    b = build_bovw(np.array([0]), idf)
    with pytest.raises(ValidationError, match="duplicate"):
        build_index([("a", b), ("a", b)], idf)


def test_disjoint_query_returns_empty():
    idf = compute_idf([np.array([0]), np.array([1])], k=4)
    index = build_index([("a", build_bovw(np.array([0]), idf))], idf)
    assert query(index, build_bovw(np.array([3]), idf), k=5) == []


def test_round_trip(tmp_path):
    rng = np.random.default_rng(15)
    docs, idf, bovws = random_corpus(rng, 25, 35)
    index = build_index(sorted(bovws.items()), idf)
    save_index(index, tmp_path / "index.json.gz", config_digest="abc123")
    loaded = load_index(tmp_path / "index.json.gz")
    assert loaded.image_ids == index.image_ids
    for qid in list(docs)[:10]:
        a = [(m.image_id, m.tfidf_score) for m in query(index, bovws[qid], k=10)]
        b = [(m.image_id, m.tfidf_score) for m in query(loaded, bovws[qid], k=10)]
        for (ia, sa), (ib, sb) in zip(a, b):
            assert ia == ib
            assert sa == pytest.approx(sb, abs=1e-12)


def test_oracle_vector_agreement():
    """The package's tf-idf and the oracle's dict arithmetic agree, so the
    ranking comparison above is a genuine dual route."""
    rng = np.random.default_rng(16)
    k = 25
    docs = [rng.integers(0, k, size=rng.integers(1, 30)) for _ in range(12)]
    idf = compute_idf(docs, k)
    idf_dict = {w: float(idf[w]) for w in range(k)}
    for words in docs:
        assert build_bovw(words, idf).weights == pytest.approx(
            tfidf_vector(words.tolist(), idf_dict), abs=1e-12)
