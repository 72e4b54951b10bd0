import numpy as np
import pytest

from dyngr.quantize import (HierarchicalTree, PQCodebook, QuantizeError,
                            hierarchical_docids, kmeans_fit, load_tree,
                            pq_encode, pq_encode_many, pq_fit, pq_reconstruct,
                            save_tree)


class TestKMeans:
    def test_k1_centroid_is_mean(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(40, 6))
        model = kmeans_fit(x, k=1, seed=0)
        assert np.allclose(model.centroids[0], x.mean(axis=0))

    def test_separated_clouds_pure_assignment(self):
        rng = np.random.default_rng(1)
        a = rng.normal(scale=0.05, size=(50, 4))
        b = rng.normal(scale=0.05, size=(50, 4)) + 100.0
        x = np.vstack([a, b])
        model = kmeans_fit(x, k=2, seed=3)
        labels = model.assign(x)
        assert len(set(labels[:50])) == 1
        assert len(set(labels[50:])) == 1
        assert labels[0] != labels[50]

    def test_inertia_non_increasing_over_seeds(self):
        rng = np.random.default_rng(2)
        for seed in range(100):
            x = rng.normal(size=(60, 5))
            model = kmeans_fit(x, k=7, seed=seed, max_iters=20)
            trace = model.inertia_trace
            assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))

    def test_k_exceeds_points(self):
        with pytest.raises(QuantizeError):
            kmeans_fit(np.zeros((3, 2)), k=4)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(30, 3))
        a = kmeans_fit(x, k=4, seed=9)
        b = kmeans_fit(x, k=4, seed=9)
        assert np.array_equal(a.centroids, b.centroids)


class TestHierarchicalDocids:
    def test_single_doc(self):
        tree, docids = hierarchical_docids({"only": np.ones(4)}, branching=4,
                                           leaf_threshold=10, seed=0)
        # root is a leaf: no path tokens, just the first ordinal
        assert docids["only"] == (tree.ordinal_token(0),)
        assert tree.docid_length == 1

    def test_twenty_docs_depth_two(self):
        # ten tight well-separated pairs: one split, every leaf holds 2 docs
        rng = np.random.default_rng(3)
        centers = rng.normal(scale=100.0, size=(10, 8))
        embeddings = {}
        for i, center in enumerate(centers):
            for j in range(2):
                embeddings[f"d{i}_{j}"] = center + rng.normal(scale=0.01, size=8)
        tree, docids = hierarchical_docids(embeddings, branching=10,
                                           leaf_threshold=10, seed=1)
        assert all(len(d) == 2 for d in docids.values())

    def test_uniqueness_thousand_docs(self):
        rng = np.random.default_rng(4)
        embeddings = {f"d{i}": rng.normal(size=16) for i in range(1000)}
        _, docids = hierarchical_docids(embeddings, branching=8,
                                        leaf_threshold=20, seed=2)
        assert len(set(docids.values())) == 1000

    def test_uniform_length_and_padding(self):
        rng = np.random.default_rng(5)
        embeddings = {f"d{i}": rng.normal(size=8) for i in range(300)}
        tree, docids = hierarchical_docids(embeddings, branching=3,
                                           leaf_threshold=5, seed=0)
        lengths = {len(d) for d in docids.values()}
        assert lengths == {tree.docid_length}

    def test_assign_new_reuses_frozen_tree(self):
        rng = np.random.default_rng(6)
        embeddings = {f"d{i}": rng.normal(size=8) for i in range(100)}
        tree, docids = hierarchical_docids(embeddings, branching=4,
                                           leaf_threshold=10, seed=0)
        new_docid = tree.assign_new("new", rng.normal(size=8))
        assert len(new_docid) == tree.docid_length
        assert new_docid not in set(docids.values())

    def test_tree_roundtrip(self, tmp_path):
        rng = np.random.default_rng(7)
        embeddings = {f"d{i}": rng.normal(size=8) for i in range(60)}
        tree, _ = hierarchical_docids(embeddings, branching=4, leaf_threshold=8, seed=0)
        save_tree(tree, tmp_path / "tree.json")
        loaded = load_tree(tmp_path / "tree.json")
        assert isinstance(loaded, HierarchicalTree)
        assert loaded.doc_paths == tree.doc_paths
        vec = rng.normal(size=8)
        assert loaded.assign_new("x", vec) == tree.assign_new("x", vec)


class TestPQ:
    def test_paper_default_configuration(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(1200, 16))
        cb = pq_fit(x, m=4, k=1024, seed=0, max_iters=2)
        assert cb.m == 4 and cb.k == 1024 and cb.sub_dim == 4

    def test_m1_reduces_to_kmeans(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(80, 6))
        cb = pq_fit(x, m=1, k=5, seed=3)
        model = kmeans_fit(x, k=5, seed=3)
        codes = pq_encode_many(cb, x)[:, 0]
        assert np.array_equal(codes, model.assign(x))

    def test_vocab_size_sweep(self):
        # k up to 8192 demands at least that many training vectors per subspace
        rng = np.random.default_rng(10)
        x = rng.normal(size=(9000, 8))
        for k in (64, 256, 1024, 4096, 8192):
            cb = pq_fit(x, m=2, k=k, seed=0, max_iters=1)
            assert cb.k == k
            codes = pq_encode_many(cb, x[:50])
            assert codes.max() < k

    def test_encode_exact_centroid_concat(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(200, 8))
        cb = pq_fit(x, m=4, k=10, seed=1)
        target = (3, 7, 1, 9)
        vec = pq_reconstruct(cb, target)
        assert pq_encode(cb, vec) == target

    def test_encode_deterministic(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(100, 8))
        cb = pq_fit(x, m=2, k=8, seed=0)
        v = rng.normal(size=8)
        assert pq_encode(cb, v) == pq_encode(cb, v)

    def test_encode_matches_bruteforce(self):
        rng = np.random.default_rng(13)
        for m, k in ((2, 16), (4, 64)):
            x = rng.normal(size=(400, 16))
            cb = pq_fit(x, m=m, k=k, seed=2)
            sub = cb.sub_dim
            for v in rng.normal(size=(250, 16)):
                expected = tuple(
                    int(np.argmin([np.linalg.norm(v[s * sub:(s + 1) * sub] - cb.centroids[s, c])
                                   for c in range(k)]))
                    for s in range(m)
                )
                assert pq_encode(cb, v) == expected

    def test_reconstruct_fixed_point(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(100, 8))
        cb = pq_fit(x, m=4, k=6, seed=0)
        vec = pq_reconstruct(cb, (0, 5, 2, 3))
        assert np.array_equal(pq_reconstruct(cb, pq_encode(cb, vec)), vec)

    def test_reconstruct_code_zero(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=(60, 8))
        cb = pq_fit(x, m=4, k=4, seed=0)
        expected = np.concatenate([cb.centroids[s, 0] for s in range(4)])
        assert np.array_equal(pq_reconstruct(cb, (0, 0, 0, 0)), expected)

    def test_reconstruction_error_non_increasing_in_k(self):
        rng = np.random.default_rng(16)
        x = rng.normal(size=(600, 8))
        test = rng.normal(size=(500, 8))
        medians = []
        for k in (16, 64, 256):
            cb = pq_fit(x, m=2, k=k, seed=4)
            errs = [np.linalg.norm(v - pq_reconstruct(cb, pq_encode(cb, v))) for v in test]
            medians.append(float(np.median(errs)))
        assert medians[0] >= medians[1] >= medians[2]

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(17)
        cb = pq_fit(rng.normal(size=(50, 8)), m=2, k=4, seed=0)
        with pytest.raises(QuantizeError):
            pq_encode(cb, np.zeros(10))

    def test_bad_code_rejected(self):
        rng = np.random.default_rng(18)
        cb = pq_fit(rng.normal(size=(50, 8)), m=2, k=4, seed=0)
        with pytest.raises(QuantizeError):
            pq_reconstruct(cb, (0, 4))
        with pytest.raises(QuantizeError):
            pq_reconstruct(cb, (0,))

    def test_subspace_error_is_labeled(self):
        rng = np.random.default_rng(19)
        with pytest.raises(QuantizeError, match="subspace 0"):
            pq_fit(rng.normal(size=(5, 8)), m=2, k=10, seed=0)

    def test_centroids_frozen(self):
        rng = np.random.default_rng(20)
        cb = pq_fit(rng.normal(size=(50, 8)), m=2, k=4, seed=0)
        with pytest.raises(ValueError):
            cb.centroids[0, 0, 0] = 1.0

    def test_codebook_roundtrip(self, tmp_path):
        rng = np.random.default_rng(21)
        cb = pq_fit(rng.normal(size=(80, 8)), m=4, k=8, seed=5)
        cb.save(tmp_path / "cb.bin")
        loaded = PQCodebook.load(tmp_path / "cb.bin")
        assert loaded.m == cb.m and loaded.k == cb.k and loaded.dim == cb.dim
        assert np.array_equal(loaded.centroids, cb.centroids)

    def test_frozen_codebook_stable_codes(self):
        rng = np.random.default_rng(22)
        x = rng.normal(size=(120, 8))
        cb = pq_fit(x, m=2, k=8, seed=0)
        v = rng.normal(size=8)
        before = pq_encode(cb, v)
        pq_encode_many(cb, rng.normal(size=(500, 8)))  # unrelated encoding work
        assert pq_encode(cb, v) == before
