import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varsynth.ann import IndexFormatError, MrptIndex, exact_knn, recall_at_k
from varsynth.embeddings import EmbeddingTable


def random_table(n, dim, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return EmbeddingTable([f"w{i:05d}" for i in range(n)], scale * rng.standard_normal((n, dim)))


def brute_force(table, q, k):
    """Plain Python reference: sort every (distance, word) pair."""
    scored = sorted(
        (float(np.sqrt(((vec - q) ** 2).sum())), word)
        for word, vec in zip(table.words, table.vectors)
    )
    return [(w, d) for d, w in scored[:k]]


def leaf_members(tree):
    return [set(leaf.tolist()) for leaf in tree.leaves]


class TestBuild:
    def test_single_point(self):
        t = EmbeddingTable(["a"], [[1.0, 2.0]])
        index = MrptIndex.build(t, n_trees=4, leaf_size=8, seed=0)
        assert index.n_trees == 4
        for tree in index.trees:
            assert tree.root == -1
            assert [leaf.tolist() for leaf in tree.leaves] == [[0]]

    def test_partition_property(self):
        t = random_table(1000, 250)
        index = MrptIndex.build(t, n_trees=5, leaf_size=32, seed=7)
        for tree in index.trees:
            sizes = [len(leaf) for leaf in tree.leaves]
            assert max(sizes) <= 32
            members = np.concatenate(tree.leaves)
            assert len(members) == 1000
            assert set(members.tolist()) == set(range(1000))

    def test_split_rule(self):
        """Left subtree points project <= threshold on their level's direction."""
        t = random_table(300, 8, seed=2)
        index = MrptIndex.build(t, n_trees=3, leaf_size=10, seed=1)
        X = t.vectors
        for tree in index.trees:
            def collect(ref, depth):
                if ref < 0:
                    return list(tree.leaves[-ref - 1])
                left = collect(tree.left[ref], depth + 1)
                right = collect(tree.right[ref], depth + 1)
                u = tree.directions[depth]
                assert np.all((X[left] * u).sum(axis=1) <= tree.thresholds[ref])
                assert np.all((X[right] * u).sum(axis=1) > tree.thresholds[ref])
                assert left and right
                return left + right
            assert sorted(collect(tree.root, 0)) == list(range(300))

    def test_stored_point_reaches_own_leaf(self):
        t = random_table(400, 12, seed=8)
        index = MrptIndex.build(t, n_trees=4, leaf_size=8, seed=2)
        for i in range(0, 400, 7):
            assert i in index.candidates(t.vectors[i], v=4)

    def test_directions_are_unit(self):
        index = MrptIndex.build(random_table(200, 6), n_trees=2, leaf_size=4, seed=0)
        for tree in index.trees:
            np.testing.assert_allclose(np.linalg.norm(tree.directions, axis=1), 1.0, atol=1e-12)

    def test_deterministic(self):
        t = random_table(500, 16)
        a = MrptIndex.build(t, n_trees=6, leaf_size=16, seed=42)
        b = MrptIndex.build(t, n_trees=6, leaf_size=16, seed=42)
        for ta, tb in zip(a.trees, b.trees):
            assert np.array_equal(ta.thresholds, tb.thresholds)
            assert np.array_equal(ta.directions, tb.directions)
            assert all(np.array_equal(x, y) for x, y in zip(ta.leaves, tb.leaves))

    def test_seed_matters(self):
        t = random_table(500, 16)
        a = MrptIndex.build(t, n_trees=1, leaf_size=16, seed=1)
        b = MrptIndex.build(t, n_trees=1, leaf_size=16, seed=2)
        assert not np.array_equal(a.trees[0].thresholds, b.trees[0].thresholds)

    def test_identical_points_terminate(self):
        t = EmbeddingTable([f"w{i}" for i in range(20)], np.ones((20, 3)))
        index = MrptIndex.build(t, n_trees=2, leaf_size=4, seed=0)
        for tree in index.trees:
            assert sum(len(leaf) for leaf in tree.leaves) == 20

    def test_heavy_ties_still_split(self):
        vecs = np.zeros((10, 1))
        vecs[-1] = 1.0
        t = EmbeddingTable([f"w{i}" for i in range(10)], vecs)
        tree = MrptIndex.build(t, n_trees=1, leaf_size=1, seed=0).trees[0]
        # nine identical points cannot be separated, but the odd one out is
        assert sorted(len(leaf) for leaf in tree.leaves) == [1, 9]

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            MrptIndex.build(EmbeddingTable([], np.empty((0, 2))), 2, 4, 0)


class TestQuery:
    def test_exhaustive_leaf_is_exact(self):
        t = EmbeddingTable(["0", "1", "5"], [[0.0], [1.0], [5.0]])
        index = MrptIndex.build(t, n_trees=4, leaf_size=3, seed=0)
        res = index.query([0.9], k=2, v=1)
        assert [w for w, _ in res.neighbors] == ["1", "0"]
        assert [d for _, d in res.neighbors] == pytest.approx([0.1, 0.9], abs=1e-12)
        assert not res.exhausted

    @pytest.mark.parametrize("k", [50, 51, 200])
    def test_k_at_least_vocab(self, k):
        t = random_table(50, 4)
        index = MrptIndex.build(t, n_trees=3, leaf_size=8, seed=0)
        res = index.query(t.vectors[0], k=k, v=1)
        cand = index.candidates(t.vectors[0], 1)
        assert len(res) == len(cand)
        assert res.exhausted == (len(cand) < k)

    def test_v_out_of_range(self):
        index = MrptIndex.build(random_table(20, 3), n_trees=3, leaf_size=4, seed=0)
        with pytest.raises(ValueError, match="v=4"):
            index.query(np.zeros(3), 2, v=4)
        with pytest.raises(ValueError):
            index.query(np.zeros(3), 2, v=0)

    def test_dimension_check(self):
        index = MrptIndex.build(random_table(20, 3), n_trees=3, leaf_size=4, seed=0)
        with pytest.raises(ValueError, match="dimension"):
            index.query(np.zeros(4), 2)

    def test_results_sorted_and_within_candidates(self):
        t = random_table(2000, 20, seed=4)
        index = MrptIndex.build(t, n_trees=8, leaf_size=30, seed=3)
        rng = np.random.default_rng(9)
        for q in rng.standard_normal((20, 20)):
            res = index.query(q, 15, v=2)
            d = [dist for _, dist in res.neighbors]
            assert d == sorted(d)
            assert set(res.indices.tolist()) <= set(index.candidates(q, 2).tolist())
            assert len(res) <= 15

    def test_deterministic_output(self):
        t = random_table(1000, 12)
        q = np.random.default_rng(1).standard_normal(12)
        a = MrptIndex.build(t, 6, 20, 5).query(q, 10, 2)
        b = MrptIndex.build(t, 6, 20, 5).query(q, 10, 2)
        assert a.neighbors == b.neighbors

    def test_monotone_in_tree_count(self):
        t = random_table(1500, 10, seed=11)
        big = MrptIndex.build(t, n_trees=12, leaf_size=20, seed=5)
        rng = np.random.default_rng(0)
        for n_trees in (2, 4, 8):
            small = MrptIndex.build(t, n_trees=n_trees, leaf_size=20, seed=5)
            for q in rng.standard_normal((10, 10)):
                for v in (1, 2):
                    assert set(small.candidates(q, v)) <= set(big.candidates(q, v))


class TestExact:
    def test_nearer_point(self):
        t = EmbeddingTable(["a", "b"], [[0.0], [3.0]])
        assert exact_knn(t, [1.0], 1).neighbors == [("a", 1.0)]

    def test_self_distance(self):
        t = random_table(30, 5)
        res = exact_knn(t, t["w00007"], 1)
        assert res.neighbors == [("w00007", 0.0)]

    def test_tie_order_lexicographic(self):
        t = EmbeddingTable(["b", "a"], [[0.0, 1.0], [1.0, 0.0]])
        assert exact_knn(t, [0.0, 0.0], 2).neighbors == [("a", 1.0), ("b", 1.0)]

    def test_tie_at_cutoff(self):
        t = EmbeddingTable(["d", "c", "b", "a"], [[1.0], [-1.0], [1.0], [-1.0]])
        assert exact_knn(t, [0.0], 2).words == ["a", "b"]

    def test_exhausted(self):
        t = random_table(5, 2)
        res = exact_knn(t, np.zeros(2), 10)
        assert res.exhausted and len(res) == 5

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 60), st.integers(1, 6), st.integers(1, 70), st.integers(0, 10_000))
    def test_matches_python_reference(self, n, dim, k, seed):
        t = random_table(n, dim, seed)
        q = np.random.default_rng(seed + 1).standard_normal(dim)
        got = exact_knn(t, q, k).neighbors
        want = brute_force(t, q, k)
        assert [w for w, _ in got] == [w for w, _ in want]
        np.testing.assert_allclose([d for _, d in got], [d for _, d in want], rtol=1e-12)


class TestOracleEquivalence:
    @settings(max_examples=40, deadline=None)
    @given(
        st.integers(1, 500),
        st.sampled_from([2, 16, 250]),
        st.integers(1, 40),
        st.integers(0, 2**31),
    )
    def test_exact_mode_equals_exact_knn(self, n, dim, k, seed):
        t = random_table(n, dim, seed)
        index = MrptIndex.build(t, n_trees=3, leaf_size=n, seed=seed)
        rng = np.random.default_rng(seed)
        queries = np.vstack([rng.standard_normal((3, dim)), t.vectors[: min(n, 2)]])
        for q in queries:
            assert index.query(q, k, v=1).neighbors == exact_knn(t, q, k).neighbors

    def test_grid_ties(self):
        # integer lattice produces many exact distance ties
        pts = np.array([[x, y] for x in range(-5, 6) for y in range(-5, 6)], dtype=float)
        t = EmbeddingTable([f"p{i}" for i in range(len(pts))][::-1], pts)
        index = MrptIndex.build(t, n_trees=2, leaf_size=len(pts), seed=0)
        for q in ([0.0, 0.0], [0.5, 0.5], [2.0, -1.0]):
            assert index.query(q, 12, 1).neighbors == exact_knn(t, q, 12).neighbors


class TestRecall:
    def test_exact_mode_is_one(self):
        t = random_table(300, 8)
        index = MrptIndex.build(t, n_trees=2, leaf_size=300, seed=0)
        qs = np.random.default_rng(1).standard_normal((10, 8))
        assert recall_at_k(index, qs, 10, 1) == 1.0

    def test_single_tree_in_unit_interval(self):
        rng = np.random.default_rng(5)
        centers = rng.standard_normal((10, 8)) * 5
        pts = centers[rng.integers(0, 10, 500)] + 0.3 * rng.standard_normal((500, 8))
        t = EmbeddingTable([f"w{i}" for i in range(500)], pts)
        index = MrptIndex.build(t, n_trees=1, leaf_size=5, seed=3)
        r = recall_at_k(index, pts[:25] + 0.01, 10, 1)
        assert 0.0 <= r <= 1.0
        assert round(r, 4) == pytest.approx(r, abs=5e-5)

    def test_adversarial_lower_bound(self):
        t = random_table(400, 30)
        index = MrptIndex.build(t, n_trees=1, leaf_size=1, seed=0)
        qs = np.random.default_rng(2).standard_normal((5, 30)) * 100
        assert recall_at_k(index, qs, 10, 1) >= 0.0

    def test_low_intrinsic_dimension(self):
        # not an acceptance criterion: the default forest on data lying near an
        # 8-d subspace of a 250-d space, the regime where random projections work
        rng = np.random.default_rng(0)
        basis = rng.standard_normal((8, 250))
        pts = rng.standard_normal((3000, 8)) @ basis + 0.05 * rng.standard_normal((3000, 250))
        t = EmbeddingTable([f"w{i}" for i in range(3000)], pts)
        index = MrptIndex.build(t, n_trees=32, leaf_size=128, seed=0)
        qs = rng.standard_normal((30, 8)) @ basis + 0.05 * rng.standard_normal((30, 250))
        assert recall_at_k(index, qs, 10, 2) >= 0.9

    def test_more_trees_more_recall(self):
        t = random_table(2000, 32, seed=4)
        qs = np.random.default_rng(9).standard_normal((30, 32))
        few = recall_at_k(MrptIndex.build(t, 4, 32, 0), qs, 10, 1)
        many = recall_at_k(MrptIndex.build(t, 32, 32, 0), qs, 10, 1)
        assert many >= few

    def test_requires_queries(self):
        index = MrptIndex.build(random_table(10, 2), 1, 4, 0)
        with pytest.raises(ValueError):
            recall_at_k(index, [], 3, 1)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        t = random_table(700, 9)
        index = MrptIndex.build(t, n_trees=5, leaf_size=25, seed=-3)
        p = tmp_path / "i.mrpt"
        index.save(p)
        assert p.read_bytes()[:5] == b"MRPT1"
        back = MrptIndex.load(p, t)
        assert back.seed == -3 and back.leaf_size == 25 and back.n_trees == 5
        q = np.random.default_rng(0).standard_normal(9)
        assert back.query(q, 10, 2).neighbors == index.query(q, 10, 2).neighbors
        p2 = tmp_path / "j.mrpt"
        back.save(p2)
        assert p.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad"
        p.write_bytes(b"NOPE!" + b"\0" * 40)
        with pytest.raises(IndexFormatError, match="not an MRPT1"):
            MrptIndex.load(p, random_table(3, 2))

    def test_dim_mismatch(self, tmp_path):
        p = tmp_path / "i.mrpt"
        MrptIndex.build(random_table(30, 4), 2, 5, 0).save(p)
        with pytest.raises(IndexFormatError, match="dimension 4"):
            MrptIndex.load(p, random_table(30, 5))

    def test_truncated(self, tmp_path):
        p = tmp_path / "i.mrpt"
        MrptIndex.build(random_table(30, 4), 2, 5, 0).save(p)
        p.write_bytes(p.read_bytes()[:-7])
        with pytest.raises(IndexFormatError):
            MrptIndex.load(p, random_table(30, 4))
