import numpy as np
import pytest

from propgraph.encoding import (
    HashedNgramEmbedder,
    cosine,
    is_normalized,
    normalize,
    top_k_similar,
)
from propgraph.errors import DimensionMismatchError

from conftest import random_unit


def test_cosine_identity_antipodal_orthogonal():
    v = normalize([0.3, -0.4, 0.5, 0.2])
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-6)
    assert cosine(v, -v) == pytest.approx(-1.0, abs=1e-6)
    assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0


def test_cosine_symmetry():
    rng = np.random.default_rng(7)
    for _ in range(50):
        a, b = random_unit(rng, 16), random_unit(rng, 16)
        assert cosine(a, b) == cosine(b, a)


def test_cosine_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        cosine(np.ones(3), np.ones(4))


def test_top_k_exact_row():
    rng = np.random.default_rng(1)
    matrix = np.stack([random_unit(rng, 8) for _ in range(10)])
    hits = top_k_similar(matrix[3], matrix, 1)
    assert hits[0][0] == 3
    assert hits[0][1] == pytest.approx(1.0, abs=1e-6)


def test_top_k_truncates_to_candidate_count():
    rng = np.random.default_rng(2)
    matrix = np.stack([random_unit(rng, 4) for _ in range(3)])
    hits = top_k_similar(random_unit(rng, 4), matrix, 10)
    assert len(hits) == 3
    scores = [s for _, s in hits]
    assert scores == sorted(scores, reverse=True)


def test_top_k_matches_full_sort_oracle():
    rng = np.random.default_rng(3)
    matrix = np.stack([random_unit(rng, 8) for _ in range(20)])
    query = random_unit(rng, 8)
    got = top_k_similar(query, matrix, 5)
    # independent oracle: score every row, full sort with index tie-break
    scores = [(float(np.dot(matrix[i].astype(np.float64), query.astype(np.float64))), i) for i in range(20)]
    expected = sorted(scores, key=lambda t: (-t[0], t[1]))[:5]
    assert [(i, pytest.approx(s, abs=1e-12)) for s, i in expected] == [
        (i, pytest.approx(s, abs=1e-12)) for i, s in got
    ]


def test_top_k_prefix_property():
    rng = np.random.default_rng(4)
    matrix = np.stack([random_unit(rng, 8) for _ in range(15)])
    query = random_unit(rng, 8)
    for k in range(1, 14):
        small = [i for i, _ in top_k_similar(query, matrix, k)]
        big = [i for i, _ in top_k_similar(query, matrix, k + 1)]
        assert big[:k] == small


def test_top_k_tie_break_ascending_index():
    row = normalize([1.0, 0.0, 0.0])
    matrix = np.stack([row, row, row])
    hits = top_k_similar(row, matrix, 3)
    assert [i for i, _ in hits] == [0, 1, 2]


def test_top_k_rejects_bad_input():
    with pytest.raises(ValueError):
        top_k_similar(np.ones(3), np.zeros((0, 3)), 1)
    with pytest.raises(ValueError):
        top_k_similar(np.ones(3), np.ones((2, 3)), 0)


def test_mock_embed_deterministic():
    embedder = HashedNgramEmbedder()
    a = embedder.embed_one("abc")
    b = embedder.embed_one("abc")
    assert a.tobytes() == b.tobytes()


def test_mock_embed_lexical_similarity():
    embedder = HashedNgramEmbedder()
    plant = embedder.embed_one("solar power plant")
    station = embedder.embed_one("solar power station")
    marine = embedder.embed_one("marine biology")
    assert cosine(plant, station) > cosine(plant, marine)


def test_mock_embed_unit_norm_on_random_strings():
    embedder = HashedNgramEmbedder()
    rng = np.random.default_rng(5)
    alphabet = list("abcdefghijklmnopqrstuvwxyz .,")
    for _ in range(100):
        n = int(rng.integers(0, 60))
        text = "".join(rng.choice(alphabet, size=n))
        vec = embedder.embed_one(text)
        assert is_normalized(vec, 1e-6)
        assert vec.dtype == np.float32
        assert vec.shape == (256,)


def test_normalize_zero_vector_is_deterministic_basis():
    vec = normalize(np.zeros(5))
    assert vec[0] == 1.0 and is_normalized(vec)
