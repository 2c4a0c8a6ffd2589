"""Embedding table and top-k cosine neighborhoods vs a brute-force oracle."""

import math

import numpy as np
import pytest

from mutaprobe.embeddings import (
    EmbeddingTable,
    load_embedding_table,
    top_k_similar,
    write_embedding_table,
)
from mutaprobe.errors import ContainerFormatError, UnknownToken


def brute_force_top_k(vectors, query_id, k):
    """Per-pair cosine with fsum, sorted by (-cos, id). The independent oracle."""

    def cosine(a, b):
        num = math.fsum(float(x) * float(y) for x, y in zip(a, b))
        na = math.sqrt(math.fsum(float(x) * float(x) for x in a))
        nb = math.sqrt(math.fsum(float(x) * float(x) for x in b))
        return num / (na * nb)

    scored = [
        (i, cosine(vectors[i], vectors[query_id]))
        for i in range(len(vectors))
        if i != query_id and any(v != 0 for v in vectors[i])
    ]
    scored.sort(key=lambda t: (-t[1], t[0]))
    return [i for i, _ in scored[:k]]


def small_table():
    return EmbeddingTable(
        surfaces=("alpha", "beta", "gamma"),
        vectors=np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]], dtype=np.float32),
    )


def test_nearest_neighbor_hand_computed():
    assert top_k_similar(small_table(), 0, 1) == [1]


def test_exhausted_vocabulary():
    assert top_k_similar(small_table(), 0, 5) == [1, 2]


def test_self_never_included():
    t = small_table()
    for q in range(3):
        assert q not in top_k_similar(t, q, 10)


def test_tie_break_ascending_id():
    # ids 2 and 1 are identical vectors, so both tie at cosine 1 with id 0
    t = EmbeddingTable(
        surfaces=("a", "b", "c"),
        vectors=np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]], dtype=np.float32),
    )
    assert top_k_similar(t, 0, 2) == [1, 2]
    assert top_k_similar(t, 2, 2) == [0, 1]


def test_zero_vectors_excluded_both_ways():
    t = EmbeddingTable(
        surfaces=("a", "zero", "c"),
        vectors=np.array([[1.0, 0.0], [0.0, 0.0], [1.0, 0.1]], dtype=np.float32),
    )
    assert not t.directional(1)
    assert top_k_similar(t, 0, 5) == [2]


def test_unknown_token():
    with pytest.raises(UnknownToken):
        top_k_similar(small_table(), 99, 1)


def test_vocab_vector_size_mismatch_rejected():
    with pytest.raises(ContainerFormatError):
        EmbeddingTable(surfaces=("a",), vectors=np.ones((2, 2), dtype=np.float32))


def test_matches_brute_force_on_random_table():
    rng = np.random.Generator(np.random.PCG64(17))
    vectors = rng.normal(size=(300, 8)).astype(np.float32)
    t = EmbeddingTable(surfaces=tuple(f"tok{i}" for i in range(300)), vectors=vectors)
    for q in rng.integers(0, 300, size=25).tolist():
        assert top_k_similar(t, q, 10) == brute_force_top_k(vectors.tolist(), q, 10)


def test_file_round_trip(tmp_path):
    t = small_table()
    write_embedding_table(t, tmp_path / "emb.actv", tmp_path / "vocab.json")
    back = load_embedding_table(tmp_path / "emb.actv", tmp_path / "vocab.json")
    assert back.surfaces == t.surfaces
    assert (back.vectors == t.vectors).all()
