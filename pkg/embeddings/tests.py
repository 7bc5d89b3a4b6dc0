import numpy as np
from django.test import SimpleTestCase

from graphs.services import graph_from_pairs, normalized_adjacency

from .algorithms import cosine, similar_users, top_k_candidates
from .models import EmbeddingError, EmbeddingIndexError, EmbeddingMatrix
from .services import init_embeddings, last_layer, mean_pool, propagate, score


def random_graph(rng, n_users, n_items, density=0.4):
    pairs = [
        (u, i) for u in range(n_users) for i in range(n_items) if rng.random() < density
    ]
    return graph_from_pairs(n_users, n_items, pairs)


class InitEmbeddingsTests(SimpleTestCase):
    def test_same_seed_is_deterministic(self):
        a = init_embeddings(5, 8, seed=42)
        b = init_embeddings(5, 8, seed=42)
        np.testing.assert_array_equal(a.values, b.values)

    def test_different_seeds_differ(self):
        a = init_embeddings(5, 8, seed=1)
        b = init_embeddings(5, 8, seed=2)
        self.assertTrue(np.any(a.values != b.values))

    def test_shape_and_scale(self):
        E = init_embeddings(2, 256, seed=0)
        self.assertEqual(E.shape, (2, 256))
        self.assertTrue(E.is_finite())
        large = init_embeddings(200, 256, seed=0).values
        self.assertAlmostEqual(float(large.std()), 0.1, delta=0.005)

    def test_zero_dimension(self):
        with self.assertRaises(EmbeddingError):
            init_embeddings(3, 0, seed=0)


class PropagateTests(SimpleTestCase):
    def test_zero_layers(self):
        graph = graph_from_pairs(1, 1, [(0, 0)])
        E0 = init_embeddings(2, 4, seed=0, n_users=1)
        stack = propagate(E0, normalized_adjacency(graph), 0)
        self.assertEqual(len(stack), 1)
        np.testing.assert_array_equal(stack[0].values, E0.values)

    def test_isolated_node_rows_vanish(self):
        graph = graph_from_pairs(2, 1, [(0, 0)])
        E0 = init_embeddings(3, 4, seed=0, n_users=2)
        stack = propagate(E0, normalized_adjacency(graph), 3)
        for layer in stack.layers[1:]:
            self.assertTrue(np.all(layer.values[1] == 0.0))

    def test_single_edge_swaps_rows(self):
        graph = graph_from_pairs(1, 1, [(0, 0)])
        E0 = init_embeddings(2, 4, seed=3, n_users=1)
        E1 = propagate(E0, normalized_adjacency(graph), 1)[1]
        np.testing.assert_array_equal(E1.values[0], E0.values[1])
        np.testing.assert_array_equal(E1.values[1], E0.values[0])

    def test_matches_dense_matrix_powers(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            graph = random_graph(rng, 4, 7)
            adj = normalized_adjacency(graph)
            A = adj.toarray()
            E0 = init_embeddings(graph.n_nodes, 3, seed=int(rng.integers(1000)), n_users=4)
            stack = propagate(E0, adj, 3)
            for l in range(4):
                expected = np.linalg.matrix_power(A, l) @ E0.values
                np.testing.assert_allclose(stack[l].values, expected, atol=1e-6)

    def test_linearity(self):
        graph = random_graph(np.random.default_rng(2), 3, 5)
        adj = normalized_adjacency(graph)
        E0 = init_embeddings(graph.n_nodes, 4, seed=9, n_users=3)
        scaled = EmbeddingMatrix(values=2.5 * E0.values, n_users=3)
        for a, b in zip(propagate(E0, adj, 2).layers, propagate(scaled, adj, 2).layers):
            np.testing.assert_allclose(b.values, 2.5 * a.values, atol=1e-12)

    def test_shape_mismatch(self):
        adj = normalized_adjacency(graph_from_pairs(1, 1, [(0, 0)]))
        with self.assertRaises(EmbeddingError):
            propagate(init_embeddings(3, 2, seed=0), adj, 1)


class PoolingTests(SimpleTestCase):
    def setUp(self):
        self.graph = random_graph(np.random.default_rng(8), 2, 2, density=1.0)
        self.adj = normalized_adjacency(self.graph)
        self.E0 = init_embeddings(4, 3, seed=4, n_users=2)

    def test_mean_pool_of_single_layer(self):
        pooled = mean_pool(propagate(self.E0, self.adj, 0))
        np.testing.assert_array_equal(pooled.values, self.E0.values)

    def test_mean_pool_isolated_node(self):
        graph = graph_from_pairs(2, 1, [(0, 0)])
        E0 = init_embeddings(3, 3, seed=1, n_users=2)
        pooled = mean_pool(propagate(E0, normalized_adjacency(graph), 2))
        np.testing.assert_allclose(pooled.values[1], E0.values[1] / 3)

    def test_mean_pool_matches_dense(self):
        A = self.adj.toarray()
        expected = (self.E0.values + A @ self.E0.values + A @ A @ self.E0.values) / 3
        pooled = mean_pool(propagate(self.E0, self.adj, 2))
        np.testing.assert_allclose(pooled.values, expected, atol=1e-12)

    def test_last_layer(self):
        stack = propagate(self.E0, self.adj, 2)
        self.assertIs(last_layer(stack), stack[2])
        self.assertIs(last_layer(propagate(self.E0, self.adj, 0)), self.E0)

    def test_last_layer_differs_from_mean(self):
        stack = propagate(self.E0, self.adj, 2)
        self.assertFalse(np.allclose(last_layer(stack).values, mean_pool(stack).values))


class ScoreTests(SimpleTestCase):
    def matrix(self, user_row, item_row):
        return EmbeddingMatrix(values=np.array([user_row, item_row], dtype=float), n_users=1)

    def test_unit_vectors(self):
        self.assertEqual(score(self.matrix([1.0, 0.0], [1.0, 0.0]), 0, 0), 1.0)

    def test_orthogonal(self):
        self.assertEqual(score(self.matrix([1.0, 0.0], [0.0, 1.0]), 0, 0), 0.0)

    def test_hand_dot_product(self):
        self.assertEqual(score(self.matrix([1.0, 2.0], [3.0, -1.0]), 0, 0), 1.0)

    def test_index_out_of_range(self):
        with self.assertRaises(EmbeddingIndexError):
            score(self.matrix([1.0, 0.0], [1.0, 0.0]), 0, 1)


class TopKCandidatesTests(SimpleTestCase):
    def test_excludes_interacted_item(self):
        values = np.array([[1.0], [3.0], [2.0], [1.0]])  # user, then items 0..2
        E = EmbeddingMatrix(values=values, n_users=1)
        graph = graph_from_pairs(1, 3, [(0, 0)])
        candidates = top_k_candidates(E, graph, 0, 2)
        self.assertEqual(candidates.items, [1, 2])
        self.assertFalse(candidates.truncated)

    def test_equal_scores_break_ties_by_index(self):
        E = EmbeddingMatrix(values=np.ones((5, 2)), n_users=1)
        graph = graph_from_pairs(1, 4, [])
        self.assertEqual(top_k_candidates(E, graph, 0, 4).items, [0, 1, 2, 3])

    def test_matches_full_sort(self):
        rng = np.random.default_rng(13)
        E = EmbeddingMatrix(values=rng.normal(size=(11, 4)), n_users=1)
        graph = graph_from_pairs(1, 10, [(0, 2), (0, 7)])
        scores = E.items @ E.user_row(0)
        expected = sorted((i for i in range(10) if i not in (2, 7)), key=lambda i: (-scores[i], i))
        candidates = top_k_candidates(E, graph, 0, 5)
        self.assertEqual(candidates.items, expected[:5])
        self.assertTrue(all(a >= b for a, b in zip(candidates.scores, candidates.scores[1:])))

    def test_fewer_eligible_than_k(self):
        E = EmbeddingMatrix(values=np.ones((4, 2)), n_users=1)
        graph = graph_from_pairs(1, 3, [(0, 0)])
        with self.assertLogs("embeddings.algorithms", level="WARNING"):
            candidates = top_k_candidates(E, graph, 0, 10)
        self.assertEqual(candidates.items, [1, 2])
        self.assertTrue(candidates.truncated)


class SimilarUsersTests(SimpleTestCase):
    def test_duplicate_embedding_ranks_first(self):
        values = np.array([[1.0, 2.0], [0.0, 1.0], [1.0, 2.0], [5.0, 5.0]])
        E = EmbeddingMatrix(values=values, n_users=3)
        ranked = similar_users(E, 0, 2)
        self.assertEqual(ranked[0], 2)
        self.assertAlmostEqual(cosine(values[0], values[2]), 1.0)

    def test_excludes_self(self):
        E = EmbeddingMatrix(values=np.random.default_rng(0).normal(size=(4, 3)), n_users=4)
        self.assertNotIn(1, similar_users(E, 1, 3))

    def test_zero_norm_rows_rank_last(self):
        values = np.array([[1.0, 0.0], [0.0, 0.0], [-1.0, 0.0]])
        E = EmbeddingMatrix(values=values, n_users=3)
        self.assertEqual(similar_users(E, 0, 2), [2, 1])

    def test_matches_brute_force_cosine(self):
        values = np.random.default_rng(21).normal(size=(5, 4))
        E = EmbeddingMatrix(values=values, n_users=5)
        sims = {v: cosine(values[0], values[v]) for v in range(1, 5)}
        expected = sorted(sims, key=lambda v: (-sims[v], v))
        self.assertEqual(similar_users(E, 0, 4), expected)

    def test_cosine_symmetry(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=6), rng.normal(size=6)
        self.assertAlmostEqual(cosine(a, b), cosine(b, a), delta=1e-12)
