import random

import numpy as np
import pytest

from dyngr.embed import Embedder


def cosine(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def test_empty_input_zero_vector():
    emb = Embedder(dim=32, seed=1)
    vec = emb.embed([])
    assert vec.shape == (32,)
    assert not vec.any()


def test_deterministic():
    emb = Embedder(dim=64, seed=5)
    tokens = [3, 1, 4, 1, 5, 9, 2, 6]
    assert np.array_equal(emb.embed(tokens), emb.embed(tokens))


def test_norm_is_zero_or_one():
    emb = Embedder(dim=16, seed=0)
    rng = random.Random(0)
    for _ in range(50):
        tokens = [rng.randrange(1000) for _ in range(rng.randrange(0, 30))]
        norm = np.linalg.norm(emb.embed(tokens))
        assert norm == 0.0 or abs(norm - 1.0) < 1e-9


def test_doubling_preserves_direction_with_pure_tf():
    rng = random.Random(7)
    emb = Embedder(dim=64, seed=2, use_idf=False)
    for _ in range(25):
        tokens = [rng.randrange(500) for _ in range(rng.randrange(1, 40))]
        assert cosine(emb.embed(tokens), emb.embed(tokens + tokens)) == pytest.approx(1.0, abs=1e-12)


def test_idf_weighting_changes_vector():
    emb = Embedder(dim=32, seed=3)
    emb.fit_idf([[1, 2], [1, 3], [1, 4]])  # token 1 is common, low idf
    plain = Embedder(dim=32, seed=3, use_idf=False)
    assert not np.array_equal(emb.embed([1, 2]), plain.embed([1, 2]))


def test_disjoint_vocab_mean_cosine_near_zero():
    rng = random.Random(11)
    total = 0.0
    n_pairs = 1000
    for i in range(n_pairs):
        emb = Embedder(dim=64, seed=i, use_idf=False)
        a = [rng.randrange(0, 10_000) * 2 for _ in range(20)]       # even ids
        b = [rng.randrange(0, 10_000) * 2 + 1 for _ in range(20)]   # odd ids
        total += cosine(emb.embed(a), emb.embed(b))
    assert abs(total / n_pairs) < 0.1


def test_dim_too_small_rejected():
    with pytest.raises(ValueError):
        Embedder(dim=4)


def test_idf_table_roundtrip(tmp_path):
    emb = Embedder(dim=32, seed=9)
    emb.fit_idf([[1, 2, 3], [2, 3], [3]])
    emb.save_idf(tmp_path / "idf.json")
    loaded = Embedder.load_idf(tmp_path / "idf.json")
    tokens = [1, 2, 3, 4, 4]
    assert np.array_equal(emb.embed(tokens), loaded.embed(tokens))


def test_idf_frozen_after_fit():
    emb = Embedder(dim=32, seed=9)
    emb.fit_idf([[1, 2]])
    with pytest.raises(RuntimeError):
        emb.fit_idf([[3]])
